#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "hashconv/bench.hpp"
#include "hashconv/mesh.hpp"
#include "hashconv/net.hpp"
#include "hashconv/psh_io.hpp"
#include "hashconv/rng.hpp"
#include "hashconv/toy_data.hpp"
#include "hashconv/voxel.hpp"

namespace fs = std::filesystem;
using namespace hashconv;

namespace {

// exit code 2: usage or IO problems (bad arguments, unreadable/corrupt files)
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require_readable(const std::string& path) {
    if (!fs::exists(path)) throw UsageError("no such file: " + path);
}

std::vector<PshLevel> read_container(const std::string& path) {
    require_readable(path);
    try {
        return read_psh_file(path);
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
}

int parse_power_of_two(const std::string& value) {
    const int res = std::stoi(value);
    if (res < 4 || res > 65536 || !is_power_of_two(res))
        throw CLI::ValidationError("--res", "resolution must be a power of two in [4, 65536]");
    return res;
}

int cmd_voxelize(const std::string& input, int res, bool dilate, bool no_normalize,
                 std::uint64_t seed, float density, const std::string& out) {
    require_readable(input);
    InputModel model;
    try {
        model = load_model(input);
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
    if (!no_normalize) model = normalize_model(model);
    VoxelizeParams params;
    params.resolution = res;
    params.samples_per_area = density;
    params.dilate = dilate;
    params.seed = seed;
    VoxelizeStats stats;
    const SparseVoxelSet s = voxelize(model, params, &stats);
    if (stats.degenerate_triangles > 0)
        std::cerr << "warning: skipped " << stats.degenerate_triangles
                  << " degenerate triangles\n";
    PshBuildOptions opt;
    opt.seed = seed;
    const PshLevel psh = build_psh(s, opt);
    write_psh_file(out, {psh});
    std::cout << "n=" << psh.n << " m_bar=" << psh.hash_dim << " r_bar=" << psh.offset_dim
              << "\n";
    return 0;
}

int cmd_build(const std::string& in, int levels, const std::string& out, std::uint64_t seed) {
    const std::vector<PshLevel> existing = read_container(in);
    SparseVoxelSet current = to_sparse(existing.front());

    const int max_levels = int_log2(current.resolution) - 1;  // down to resolution 4
    if (levels > max_levels) {
        std::cerr << "warning: clamping level count to " << max_levels << "\n";
        levels = max_levels;
    }
    std::vector<PshLevel> pyramid;
    pyramid.push_back(existing.front());
    for (int l = 1; l < levels; ++l) {
        current = coarsen(current);
        PshBuildOptions opt;
        opt.seed = mix_seed(seed, static_cast<std::uint64_t>(l));
        pyramid.push_back(build_psh(current, opt));
    }
    write_psh_file(out, pyramid);
    std::cout << "levels=" << pyramid.size() << " finest=" << pyramid.front().resolution
              << " coarsest=" << pyramid.back().resolution << "\n";
    return 0;
}

int validate_container(const std::string& path) {
    const std::vector<PshLevel> levels = read_container(path);
    int violations = 0;
    for (std::size_t i = 0; i < levels.size(); ++i) {
        const SparseVoxelSet s = to_sparse(levels[i]);
        for (const std::string& v : validate(levels[i], s)) {
            std::cout << path << " level " << i << ": " << v << "\n";
            ++violations;
        }
    }
    return violations;
}

int cmd_validate(const std::string& in, const std::string& manifest) {
    int violations = 0;
    if (!in.empty()) violations += validate_container(in);
    if (!manifest.empty()) {
        require_readable(manifest);
        std::ifstream list(manifest);
        std::string line;
        std::vector<PshLevel> batch_levels;
        const fs::path base = fs::path(manifest).parent_path();
        while (std::getline(list, line)) {
            if (line.empty() || line[0] == '#') continue;
            const fs::path p = fs::path(line).is_absolute() ? fs::path(line) : base / line;
            violations += validate_container(p.string());
            batch_levels.push_back(read_container(p.string()).front());
        }
        if (batch_levels.empty()) throw UsageError("manifest lists no files");
        const SuperPsh super = build_super(batch_levels);
        const std::vector<PshLevel> back = split_super(super);
        for (std::size_t k = 0; k < back.size(); ++k) {
            if (back[k].hash != batch_levels[k].hash || back[k].tags != batch_levels[k].tags ||
                back[k].offsets != batch_levels[k].offsets ||
                back[k].data.values != batch_levels[k].data.values) {
                std::cout << "batch round-trip mismatch for model " << (k + 1) << "\n";
                ++violations;
            }
        }
        std::cout << "batch of " << back.size() << " models: " << super.total_columns()
                  << " total voxels\n";
    }
    std::cout << (violations == 0 ? "valid" : "INVALID") << "\n";
    return violations == 0 ? 0 : 1;
}

int cmd_bench_mem(const std::string& shape, const std::string& res_list, const std::string& csv,
                  const std::string& model_path, std::uint64_t seed) {
    BenchOptions options;
    if (shape == "sphere") options.shape = BenchShape::Sphere;
    else if (shape == "shell") options.shape = BenchShape::Shell;
    else if (shape == "file") options.shape = BenchShape::File;
    else throw UsageError("unknown shape: " + shape);
    if (options.shape == BenchShape::File) {
        if (model_path.empty()) throw UsageError("--shape file requires --model");
        require_readable(model_path);
        options.model_path = model_path;
    }
    options.seed = seed;
    options.resolutions.clear();
    std::stringstream ss(res_list);
    std::string tok;
    while (std::getline(ss, tok, ','))
        options.resolutions.push_back(parse_power_of_two(tok));
    if (options.resolutions.empty()) throw UsageError("empty resolution list");

    const BenchResult result = run_memory_bench(options);
    if (!csv.empty()) {
        std::ofstream out(csv);
        if (!out) throw UsageError("cannot write CSV: " + csv);
        write_bench_csv(out, result.rows);
    }
    write_bench_csv(std::cout, result.rows);
    std::cout << "slope_n=" << result.slope_voxels << " slope_slack=" << result.slope_slack
              << " slope_octants=" << result.slope_octants << "\n";
    return 0;
}

ToyDataset load_or_generate(const std::string& dir, std::uint64_t seed) {
    if (toy_dataset_exists(dir)) return load_toy_dataset(dir);
    std::cout << "generating toy dataset in " << dir << " (seed " << seed << ")\n";
    ToyOptions options;
    options.seed = seed;
    const ToyDataset data = generate_toy_dataset(options);
    save_toy_dataset(dir, data);
    return data;
}

int cmd_gendata(const std::string& dir, std::uint64_t seed, int train_n, int test_n, int res,
                int poses) {
    ToyOptions options;
    options.seed = seed;
    options.train_per_class = train_n;
    options.test_per_class = test_n;
    options.resolution = res;
    options.poses = poses;
    const ToyDataset data = generate_toy_dataset(options);
    save_toy_dataset(dir, data);
    std::cout << "wrote " << data.train.size() << " train and " << data.test.size()
              << " test samples\n";
    return 0;
}

int cmd_train(const std::string& data_dir, const std::string& config_path,
              const std::string& checkpoint) {
    require_readable(config_path);
    TrainConfig config;
    try {
        config = load_train_config(config_path);
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
    const ToyDataset data = load_or_generate(data_dir, config.seed);

    const int level_max = int_log2(data.train.front().levels.front().resolution);
    LayerGraph graph = make_graph<float>(level_max, data.num_classes, config.seed);
    train_classifier(graph, data.train, config, &std::cout);
    if (!checkpoint.empty()) save_checkpoint(checkpoint, graph);

    const double train_acc = evaluate(graph, data.train, 1, config.batch_size);
    const double test_acc = evaluate(graph, data.test, 1, config.batch_size);
    std::cout << "train_accuracy " << train_acc << "\ntest_accuracy " << test_acc << "\n";
    return 0;
}

int cmd_eval(const std::string& data_dir, const std::string& checkpoint, int voting,
             std::uint64_t seed) {
    require_readable(checkpoint);
    LayerGraph graph;
    try {
        graph = load_checkpoint(checkpoint);
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
    const ToyDataset data = load_or_generate(data_dir, seed);
    const double acc = evaluate(graph, data.test, voting);
    std::cout << "accuracy " << acc << " (voting " << voting << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sparse voxel CNN on perfect spatial hash tables"};
    app.require_subcommand(1);

    std::string input, output, in_psh, manifest, shape = "sphere", res_list = "32,64,128,256,512";
    std::string csv, model_path, data_dir, config_path, checkpoint;
    int res = 0, levels = 3, train_n = 100, test_n = 20, poses = 12, voting = 1;
    bool dilate = false, no_normalize = false;
    std::uint64_t seed = 1;
    float density = 4.0f;

    auto* vox = app.add_subcommand("voxelize", "voxelize a mesh or point cloud into a .psh file");
    vox->add_option("--input", input, "OBJ/OFF mesh or XYZ point cloud")->required();
    vox->add_option("--res", res, "finest resolution (power of two)")
        ->required()
        ->check([](const std::string& v) {
            parse_power_of_two(v);
            return std::string{};
        });
    vox->add_flag("--dilate", dilate, "displace samples by half a voxel along the normal");
    vox->add_flag("--no-normalize", no_normalize,
                  "treat input coordinates as already scaled into the unit cube");
    vox->add_option("--seed", seed);
    vox->add_option("--density", density, "samples per voxel-face area");
    vox->add_option("--out", output, "output .psh path")->required();

    auto* build = app.add_subcommand("build", "append coarser PSH levels down to resolution 4");
    build->add_option("--in", in_psh)->required();
    build->add_option("--levels", levels, "total level count, finest included")->required();
    build->add_option("--seed", seed);
    build->add_option("--out", output)->required();

    auto* val = app.add_subcommand("validate", "check PSH invariants of containers");
    val->add_option("--in", in_psh, "a .psh container");
    val->add_option("--manifest", manifest, "text file listing member .psh paths");

    auto* bench = app.add_subcommand("bench-mem", "memory-scaling benchmark");
    bench->add_option("--shape", shape, "sphere|shell|file");
    bench->add_option("--res", res_list, "comma-separated resolutions");
    bench->add_option("--csv", csv, "output CSV path");
    bench->add_option("--model", model_path, "model file for --shape file");
    bench->add_option("--seed", seed);

    auto* gen = app.add_subcommand("gendata", "generate the synthetic 3-class dataset");
    gen->add_option("--out", data_dir)->required();
    gen->add_option("--seed", seed);
    gen->add_option("--train", train_n, "train samples per class");
    gen->add_option("--test", test_n, "test samples per class");
    gen->add_option("--res", res)->default_val(16);
    gen->add_option("--poses", poses);

    auto* train = app.add_subcommand("train", "train the classifier on the toy dataset");
    train->add_option("--data", data_dir)->required();
    train->add_option("--config", config_path)->required();
    train->add_option("--checkpoint", checkpoint, "checkpoint output path");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    eval->add_option("--data", data_dir)->required();
    eval->add_option("--checkpoint", checkpoint)->required();
    eval->add_option("--voting", voting, "pose count for orientation voting");
    eval->add_option("--seed", seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (vox->parsed())
            return cmd_voxelize(input, res, dilate, no_normalize, seed, density, output);
        if (build->parsed()) return cmd_build(in_psh, levels, output, seed);
        if (val->parsed()) {
            if (in_psh.empty() && manifest.empty())
                throw UsageError("validate needs --in or --manifest");
            return cmd_validate(in_psh, manifest);
        }
        if (bench->parsed()) return cmd_bench_mem(shape, res_list, csv, model_path, seed);
        if (gen->parsed()) return cmd_gendata(data_dir, seed, train_n, test_n, res, poses);
        if (train->parsed()) return cmd_train(data_dir, config_path, checkpoint);
        if (eval->parsed()) return cmd_eval(data_dir, checkpoint, voting, seed);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
