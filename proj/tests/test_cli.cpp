#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sys/wait.h>

#include <json.hpp>

#include "support.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Run cli(const std::string& args) {
  static const fs::path err_file = test::scratch_dir("cli_stderr") / "err.txt";
  const std::string cmd = std::string(MELAD_BIN) + " " + args + " 2>" + err_file.string();
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p);
  std::string out;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) out.append(buf, n);
  const int status = pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out, slurp(err_file)};
}

const std::string kModels = std::string(MELAD_SOURCE_DIR) + "/models/";

}  // namespace

TEST_CASE("params and receptive field") {
  const Run p = cli("params --arch " + kModels + "mela-d.json");
  CHECK(p.code == 0);
  CHECK(p.out.find("891138 trainable") != std::string::npos);
  const Run pj = cli("--json params --arch mela-d");
  CHECK(json::parse(pj.out).at("trainable") == 891138);
  const Run ref = cli("--json params --arch " + kModels + "resnet50-reference.json");
  CHECK(json::parse(ref.out).at("total") == 25636712);

  const Run rf = cli("rf --arch " + kModels + "mela-d.json");
  CHECK(rf.code == 0);
  CHECK(rf.out == "37\n");
  CHECK(json::parse(cli("--json rf --arch mela-d-lite").out).at("receptive_field") == 37);
  CHECK(cli("rf --arch no-such-model").code == 2);
}

TEST_CASE("infer with zero weights reports a benign tie") {
  const auto dir = test::scratch_dir("cli_infer");
  REQUIRE(cli("synth --out " + (dir / "s").string() + " --n 1 --size 16").code == 0);
  REQUIRE(cli("init --arch mela-d-lite --zero --out " + (dir / "z.meld").string()).code == 0);
  const std::string img = (dir / "s" / "benign" / "benign_0000.png").string();

  const Run h = cli("infer " + img + " --weights " + (dir / "z.meld").string());
  CHECK(h.code == 0);
  CHECK(h.out.find("label: benign") != std::string::npos);
  CHECK(h.out.find("p_benign: 0.500000") != std::string::npos);
  CHECK(h.out.find("p_malignant: 0.500000") != std::string::npos);
  CHECK(h.out.find("runtime_ms:") != std::string::npos);

  const Run j = cli("--json infer " + img + " --weights " + (dir / "z.meld").string());
  REQUIRE(j.code == 0);
  const json r = json::parse(j.out);
  CHECK(r.at("label") == "benign");
  CHECK(r.at("p_benign") == 0.5);
  CHECK(r.at("p_malignant") == 0.5);
  CHECK(r.contains("runtime_ms"));

  const Run missing = cli("infer " + img + " --weights " + (dir / "missing.meld").string());
  CHECK(missing.code == 2);
  CHECK(missing.err.find("missing.meld") != std::string::npos);
  std::ofstream(dir / "bad.meld") << "XXXXjunk";
  const Run bad = cli("infer " + img + " --weights " + (dir / "bad.meld").string());
  CHECK(bad.code == 2);
  CHECK(bad.err.find("bad magic") != std::string::npos);
  CHECK(cli("infer " + (dir / "nope.png").string() + " --weights " + (dir / "z.meld").string())
            .code == 2);
}

TEST_CASE("train echoes the defaults and is reproducible") {
  const auto dir = test::scratch_dir("cli_train");
  REQUIRE(cli("synth --out " + (dir / "s").string() + " --n 3 --size 12 --seed 2").code == 0);
  const std::string common = "train --manifest " + (dir / "s" / "manifest.csv").string() +
                             " --arch mela-d-lite --image-size 12 --seed 4";
  const Run a = cli(common + " --out " + (dir / "a.meld").string());
  CHECK(a.code == 0);
  CHECK(a.out.find("lr=0.0001, batch=32, epochs=20") != std::string::npos);
  const Run b = cli(common + " --out " + (dir / "b.meld").string());
  CHECK(b.code == 0);
  CHECK(slurp(dir / "a.meld") == slurp(dir / "b.meld"));
  CHECK(slurp(dir / "a.history.csv") == slurp(dir / "b.history.csv"));
  CHECK(slurp(dir / "a.history.csv").starts_with("epoch,loss,accuracy\n"));

  std::ofstream(dir / "empty.csv") << "image_path,label,source\n";
  CHECK(cli("train --manifest " + (dir / "empty.csv").string() +
              " --arch mela-d-lite --out " + (dir / "e.meld").string())
            .code == 2);
  CHECK_FALSE(fs::exists(dir / "e.meld"));
}

TEST_CASE("bench prints a table row with backend and threads") {
  const auto dir = test::scratch_dir("cli_bench");
  REQUIRE(cli("init --arch mela-d-lite --seed 1 --out " + (dir / "w.meld").string()).code == 0);
  const Run r = cli("--threads 2 bench --weights " + (dir / "w.meld").string() + " --trials 3");
  CHECK(r.code == 0);
  CHECK(r.out.find(" ± ") != std::string::npos);
  CHECK(r.out.find("| native | 2 |") != std::string::npos);
  const Run j = cli("bench --weights " + (dir / "w.meld").string() + " --trials 1 --format json");
  const json rep = json::parse(j.out);
  CHECK(rep.at("trials_ms").size() == 1);
  CHECK(rep.at("std_ms").is_null());
  CHECK(rep.at("backend") == "native");
  CHECK(rep.at("input") == json::array({3, 150, 150}));
}

TEST_CASE("dataset verbs") {
  const auto dir = test::scratch_dir("cli_dataset");
  fs::create_directories(dir / "f" / "benign");
  fs::create_directories(dir / "f" / "malignant");
  for (const char* f : {"benign/1.png", "benign/2.png", "benign/3.png", "malignant/4.png"})
    std::ofstream(dir / "f" / f) << "";
  std::ofstream(dir / "labels.csv") << "image,label\nx1,MEL\nx2,nevus\nx3,what\n";

  const Run fol = cli("--json dataset ingest --folders " + (dir / "f").string() +
                        " --source g --out " + (dir / "g.csv").string());
  CHECK(fol.code == 0);
  CHECK(json::parse(fol.out).at("benign") == 3);

  const Run csv = cli("dataset ingest --csv " + (dir / "labels.csv").string() + " --images " +
                        dir.string() + " --source k --aliases " + MELAD_SOURCE_DIR +
                        "/data/aliases.json --rejects " + (dir / "rej.csv").string() +
                        " --out " + (dir / "k.csv").string());
  CHECK(csv.code == 0);
  CHECK(slurp(dir / "rej.csv").find("what") != std::string::npos);

  const Run comb = cli("--json dataset combine --input g=" + (dir / "g.csv").string() +
                         " --input k=" + (dir / "k.csv").string() + " --combo g+k --out " +
                         (dir / "gk.csv").string());
  CHECK(comb.code == 0);
  CHECK(json::parse(comb.out).at("records") == 6);
  CHECK(cli("dataset combine --input g=" + (dir / "g.csv").string() + " --combo g+z --out " +
              (dir / "x.csv").string())
            .code == 2);

  const Run bal = cli("--json dataset balance --manifest " + (dir / "g.csv").string() +
                        " --out " + (dir / "bal.csv").string());
  CHECK(bal.code == 0);
  CHECK(json::parse(bal.out).at("malignant") == 3);
  CHECK(slurp(dir / "g.csv").find("augment_seed") == std::string::npos);  // input untouched
}

TEST_CASE("usage errors exit 1") {
  CHECK(cli("").code == 1);
  CHECK(cli("bogus").code == 1);
  CHECK(cli("infer").code == 1);
  CHECK(cli("--help").code == 0);
}
