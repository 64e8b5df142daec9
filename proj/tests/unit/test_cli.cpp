// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

int cli(const std::string& args, std::string* out = nullptr) {
    const auto log = fs::temp_directory_path() / "oed_cli_test.log";
    const std::string cmd = std::string("\"") + OED_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    if (out) {
        std::ifstream in(log);
        std::ostringstream os;
        os << in.rdbuf();
        *out = os.str();
    }
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write(const fs::path& p, const std::string& text) {
    std::ofstream(p) << text;
}

}  // namespace

TEST_CASE("cli exit codes") {
    const auto dir = fs::temp_directory_path() / "oed_cli";
    fs::remove_all(dir);
    fs::create_directories(dir);

    CHECK(cli("--help") == 0);
    CHECK(cli("") == 1);
    CHECK(cli("frobnicate") == 1);

    std::string out;
    CHECK(cli("generate --seed 5 --count 3 --print-effective-config", &out) == 0);
    CHECK(out.find("\"count\": 3") != std::string::npos);

    CHECK(cli("generate --seed 5 --count 3 --out \"" + (dir / "ds").string() + "\"") == 0);
    CHECK(fs::exists(dir / "ds" / "dataset.json"));

    write(dir / "bad.json", R"({"count": 2, "seed": 1, "colour": "red"})");
    CHECK(cli("generate --config \"" + (dir / "bad.json").string() + "\" --out \"" + (dir / "x").string() + "\"") == 1);
    write(dir / "neg.json", R"({"count": -2, "seed": 1})");
    CHECK(cli("generate --config \"" + (dir / "neg.json").string() + "\" --out \"" + (dir / "x").string() + "\"") == 1);
    write(dir / "junk.json", "{not json");
    CHECK(cli("generate --config \"" + (dir / "junk.json").string() + "\"") == 1);
    CHECK(cli("generate --config \"" + (dir / "missing.json").string() + "\"") == 3);

    write(dir / "train.json", R"({"epochs": 1})");
    CHECK(cli("train --config \"" + (dir / "train.json").string() + "\"") == 1);
    write(dir / "train.json", R"({"seed": 2, "epochs": 1, "gamma2": 3})");
    CHECK(cli("train --print-effective-config --config \"" + (dir / "train.json").string() + "\"", &out) == 0);
    CHECK(out.find("\"gamma1\": 1.0") != std::string::npos);
    CHECK(out.find("\"gamma2\": 3.0") != std::string::npos);
    write(dir / "train.json", R"({"seed": 2, "epochs": 1, "dataset": ")" + (dir / "nowhere").string() + "\"}");
    CHECK(cli("train --config \"" + (dir / "train.json").string() + "\"") == 3);

    // an empty prediction file is valid and scores zero
    write(dir / "empty_preds.json", R"({"images": []})");
    CHECK(cli("eval --dataset \"" + (dir / "ds").string() + "\" --preds \"" + (dir / "empty_preds.json").string() +
              "\" --out \"" + (dir / "m").string() + "\"",
              &out) == 0);
    CHECK(fs::exists(dir / "m" / "metrics.csv"));
    CHECK(cli("eval --dataset \"" + (dir / "nowhere").string() + "\" --preds \"" + (dir / "empty_preds.json").string() +
              "\"") == 3);

    CHECK(cli("gradcheck --instances 2 --only op.exp") == 0);
    CHECK(cli("gradcheck --instances 2 --only op.exp --corrupt op.exp", &out) == 2);
    CHECK(out.find("FAIL op.exp") != std::string::npos);
    fs::remove_all(dir);
}
