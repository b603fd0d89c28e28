#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace {

const char* kCli = UPL_CLI_PATH;

int run(const std::string& args) {
    std::string cmd = std::string(kCli) + " " + args + " >/dev/null 2>&1";
    int status = std::system(cmd.c_str());
    if (status == -1) return -1;
    return WEXITSTATUS(status);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("upl_cli_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

void run_full_pipeline(const std::string& out, const std::string& extra_train_flags = "") {
    REQUIRE(run("cache-features --dataset toy:7 --backend toy:7 --split train --out " + out) == 0);
    REQUIRE(run("cache-features --dataset toy:7 --backend toy:7 --split test --out " + out) == 0);
    REQUIRE(run("pseudo-label --dataset toy:7 --backends toy:7 --strategy top_k:16 --out " + out) ==
            0);
    REQUIRE(run("train --dataset toy:7 --backend toy:7 --prompts 2 --seeds 1,2 " +
                extra_train_flags + " --out " + out) == 0);
    REQUIRE(run("eval --dataset toy:7 --backend toy:7 --out " + out) == 0);
    REQUIRE(run("eval --dataset toy:7 --backend toy:7 --zeroshot --out " + out) == 0);
}

} // namespace

TEST_CASE("cache-features writes a cache and reruns cleanly") {
    TempDir tmp("cache");
    std::string out = tmp.str();
    CHECK(run("cache-features --dataset toy:7 --backend toy:7 --split train --out " + out) == 0);
    fs::path cache = tmp.path / "cache/toy_7/train/toy_7_d16.featcache";
    REQUIRE(fs::exists(cache));
    auto bytes = read_file(cache);
    CHECK(run("cache-features --dataset toy:7 --backend toy:7 --split train --out " + out) == 0);
    CHECK(read_file(cache) == bytes); // idempotent rerun
}

TEST_CASE("missing data root for a registered real dataset exits 2") {
    TempDir tmp("dataroot");
    CHECK(run("cache-features --dataset UCF101 --backend toy:7 --split train --out " + tmp.str()) ==
          2);
}

TEST_CASE("unknown dataset or backend exits 2") {
    TempDir tmp("unknown");
    CHECK(run("cache-features --dataset NotADataset --backend toy:7 --split train --out " +
              tmp.str()) == 2);
    CHECK(run("cache-features --dataset toy:7 --backend warp:9 --split train --out " + tmp.str()) ==
          2);
}

TEST_CASE("pseudo-label respects the top-K budget") {
    TempDir tmp("topk");
    std::string out = tmp.str();
    REQUIRE(run("cache-features --dataset toy:7 --backend toy:7 --split train --out " + out) == 0);
    REQUIRE(run("pseudo-label --dataset toy:7 --backends toy:7 --strategy top_k:2 --out " + out) ==
            0);

    std::ifstream file(tmp.path / "pseudo/toy_7/labels.pseudo");
    std::string line;
    std::getline(file, line); // header
    CHECK(line.find("strategy=top_k") != std::string::npos);
    CHECK(line.find("param=2") != std::string::npos);
    std::map<std::string, int> per_class;
    while (std::getline(file, line)) {
        if (line.empty()) continue;
        auto first_tab = line.find('\t');
        auto second_tab = line.find('\t', first_tab + 1);
        per_class[line.substr(first_tab + 1, second_tab - first_tab - 1)]++;
    }
    CHECK(!per_class.empty());
    for (const auto& [cls, count] : per_class) CHECK(count <= 2);
}

TEST_CASE("pseudo-label writes a run manifest and honors the sample cap") {
    TempDir tmp("cap");
    std::string out = tmp.str();
    REQUIRE(run("cache-features --dataset toy:7 --backend toy:7 --split train --out " + out) == 0);
    REQUIRE(run("pseudo-label --dataset toy:7 --backends toy:7 --sample-cap 30 --out " + out) == 0);

    auto manifest = read_file(tmp.path / "pseudo/toy_7/labels.pseudo.manifest.txt");
    CHECK(manifest.find("command=pseudo-label") != std::string::npos);
    CHECK(manifest.find("sample_cap=30") != std::string::npos);
    CHECK(manifest.find("strategy=top_k:16") != std::string::npos);

    // only 30 of 120 train images were labeled, so fewer than 48 survive
    std::ifstream file(tmp.path / "pseudo/toy_7/labels.pseudo");
    std::string line;
    std::getline(file, line);
    std::size_t records = 0;
    while (std::getline(file, line)) {
        if (!line.empty()) ++records;
    }
    CHECK(records <= 30);
    CHECK(records > 0);
}

TEST_CASE("over-strict threshold exits 3 with an empty selection") {
    TempDir tmp("thresh");
    std::string out = tmp.str();
    REQUIRE(run("cache-features --dataset toy:7 --backend toy:7 --split train --out " + out) == 0);
    CHECK(run("pseudo-label --dataset toy:7 --backends toy:7 --strategy threshold:0.99 --out " +
              out) == 3);
}

TEST_CASE("duplicate training seeds exit 2") {
    TempDir tmp("dupseed");
    std::string out = tmp.str();
    REQUIRE(run("cache-features --dataset toy:7 --backend toy:7 --split train --out " + out) == 0);
    REQUIRE(run("pseudo-label --dataset toy:7 --backends toy:7 --out " + out) == 0);
    CHECK(run("train --dataset toy:7 --backend toy:7 --prompts 2 --seeds 3,3 --out " + out) == 2);
}

TEST_CASE("train before pseudo-label explains what to run") {
    TempDir tmp("order");
    CHECK(run("train --dataset toy:7 --backend toy:7 --out " + tmp.str()) == 2);
}

TEST_CASE("full pipeline produces prompts, manifests and reports") {
    TempDir tmp("full");
    run_full_pipeline(tmp.str());

    CHECK(fs::exists(tmp.path / "prompts/toy_7/prompt_1.prompt"));
    CHECK(fs::exists(tmp.path / "prompts/toy_7/prompt_2.prompt"));
    auto manifest = read_file(tmp.path / "prompts/toy_7/manifest.txt");
    CHECK(manifest.find("command=train") != std::string::npos);
    CHECK(manifest.find("seed_1_loss_history=") != std::string::npos);
    CHECK(manifest.find("sgd_momentum=0") != std::string::npos);

    CHECK(fs::exists(tmp.path / "reports/eval-toy_7/eval.csv"));
    CHECK(fs::exists(tmp.path / "reports/zeroshot-toy_7/eval_zeroshot.csv"));

    auto eval_csv = read_file(tmp.path / "reports/eval-toy_7/eval.csv");
    CHECK(eval_csv.find("class_index,class_name") == 0);
    CHECK(eval_csv.find("summary,overall,120,") != std::string::npos);
}

TEST_CASE("identical pipeline reruns are byte-identical") {
    TempDir a("det_a"), b("det_b");
    run_full_pipeline(a.str());
    run_full_pipeline(b.str());

    for (const char* rel :
         {"prompts/toy_7/prompt_1.prompt", "prompts/toy_7/prompt_2.prompt",
          "prompts/toy_7/manifest.txt", "pseudo/toy_7/labels.pseudo",
          "reports/eval-toy_7/eval.csv", "reports/zeroshot-toy_7/eval_zeroshot.csv"}) {
        CAPTURE(rel);
        CHECK(read_file(a.path / rel) == read_file(b.path / rel));
    }
}

TEST_CASE("duplicate backends collapse to the single-backend result") {
    TempDir single("ens_single"), twice("ens_twice");
    for (auto* tmp : {&single, &twice}) {
        REQUIRE(run("cache-features --dataset toy:7 --backend toy:7 --split train --out " +
                    tmp->str()) == 0);
    }
    REQUIRE(run("pseudo-label --dataset toy:7 --backends toy:7 --out " + single.str()) == 0);
    REQUIRE(run("pseudo-label --dataset toy:7 --backends toy:7,toy:7 --out " + twice.str()) == 0);
    CHECK(read_file(single.path / "pseudo/toy_7/labels.pseudo") ==
          read_file(twice.path / "pseudo/toy_7/labels.pseudo"));
}

TEST_CASE("pseudo-label ensemble across two backends") {
    TempDir tmp("ens2");
    std::string out = tmp.str();
    REQUIRE(run("cache-features --dataset toy:7 --backend toy:7 --split train --out " + out) == 0);
    REQUIRE(run("cache-features --dataset toy:7 --backend toy:9 --split train --out " + out) == 0);
    REQUIRE(run("pseudo-label --dataset toy:7 --backends toy:7,toy:9 --out " + out) == 0);
    std::ifstream file(tmp.path / "pseudo/toy_7/labels.pseudo");
    std::string header, record;
    std::getline(file, header);
    std::getline(file, record);
    CHECK(record.find("ensemble(M=2)") != std::string::npos);
}

TEST_CASE("analyze reports") {
    TempDir tmp("analyze");
    std::string out = tmp.str();
    run_full_pipeline(out);

    CHECK(run("analyze --dataset toy:7 --backend toy:7 --report nearest-words --out " + out) == 0);
    CHECK(fs::exists(tmp.path / "reports/analyze-toy_7/nearest_words.csv"));

    CHECK(run("analyze --dataset toy:7 --backend toy:7 --report per-class --out " + out) == 0);
    CHECK(fs::exists(tmp.path / "reports/analyze-toy_7/per_class.csv"));

    std::string trained_csv = (tmp.path / "reports/eval-toy_7/eval.csv").string();
    std::string zeroshot_csv = (tmp.path / "reports/zeroshot-toy_7/eval_zeroshot.csv").string();
    CHECK(run("analyze --dataset toy:7 --backend toy:7 --report transfer-improvement "
              "--trained-csv " +
              trained_csv + " --zeroshot-csv " + zeroshot_csv + " --out " + out) == 0);
    CHECK(fs::exists(tmp.path / "reports/analyze-toy_7/transfer_improvement.csv"));

    CHECK(run("analyze --dataset toy:7 --backend toy:7 --report bogus --out " + out) == 2);
    CHECK(run("analyze --dataset toy:7 --backend toy:7 --report transfer-improvement --out " +
              out) == 2); // missing csv flags
}

TEST_CASE("analyze model-gap across two backends") {
    TempDir tmp("gap");
    std::string out = tmp.str();
    TempDir other("gap_other");

    REQUIRE(run("cache-features --dataset toy:7 --backend toy:7 --split train --out " + out) == 0);
    REQUIRE(run("pseudo-label --dataset toy:7 --backends toy:7 --out " + out) == 0);
    REQUIRE(run("cache-features --dataset toy:7 --backend toy:9 --split train --out " +
                other.str()) == 0);
    REQUIRE(run("pseudo-label --dataset toy:7 --backends toy:9 --out " + other.str()) == 0);

    std::string files = (tmp.path / "pseudo/toy_7/labels.pseudo").string() + "," +
                        (other.path / "pseudo/toy_7/labels.pseudo").string();
    CHECK(run("analyze --dataset toy:7 --backend toy:7 --report model-gap --pseudo-files " +
              files + " --out " + out) == 0);
    auto csv = read_file(tmp.path / "reports/analyze-toy_7/model_gap.csv");
    CHECK(csv.find("class_index,baseline(toy:7:d16)") == 0);
    CHECK(csv.find("toy:9:d16") != std::string::npos);

    // one file is not enough for a gap
    CHECK(run("analyze --dataset toy:7 --backend toy:7 --report model-gap --pseudo-files " +
              (tmp.path / "pseudo/toy_7/labels.pseudo").string() + " --out " + out) == 2);
}

TEST_CASE("help lists subcommands and recipe defaults") {
    std::string cmd = std::string(kCli) + " train --help 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string output;
    char buf[256];
    while (fgets(buf, sizeof buf, pipe)) output += buf;
    pclose(pipe);
    CHECK(output.find("--prompts") != std::string::npos);
    CHECK(output.find("16") != std::string::npos);    // N and L defaults
    CHECK(output.find("0.002") != std::string::npos); // lr default
    CHECK(output.find("50") != std::string::npos);    // epochs default
    CHECK(output.find("32") != std::string::npos);    // batch default
}

TEST_CASE("usage errors exit 2") {
    CHECK(run("") == 2);
    CHECK(run("not-a-subcommand") == 2);
    CHECK(run("train") == 2); // missing required flags
}
