#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "tamperloc/netpbm.hpp"

using namespace tamperloc;

namespace {

namespace fs = std::filesystem;

struct CmdResult {
  int code;
  std::string out;
};

CmdResult run(const std::string& args, const std::string& env = "") {
  std::string cmd = (env.empty() ? "" : "env " + env + " ") +
                    std::string(TAMPERLOC_BIN) + " " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[4096];
  size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, n);
  int status = ::pclose(pipe);
  REQUIRE(WIFEXITED(status));
  return {WEXITSTATUS(status), out};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const char* tag) {
    path = fs::temp_directory_path() /
           (std::string("tamperloc_cli_") + tag + "_" +
            std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string sub(const char* name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// relative path -> bytes, for whole-tree determinism comparisons
std::map<std::string, std::string> tree_bytes(const std::string& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    out[fs::relative(e.path(), root).string()] = slurp(e.path().string());
  }
  return out;
}

int count_lines(const std::string& text) {
  int n = 0;
  for (char ch : text) n += ch == '\n';
  return n;
}

// one shared tiny dataset for the train/eval/infer cases
const std::string& shared_ds() {
  static TempDir td("ds");
  static std::string dir = [&] {
    std::string ds = td.sub("ds");
    CmdResult r = run("synth --out " + ds + " --n 8 --size 64 --seed 11");
    REQUIRE(r.code == 0);
    return ds;
  }();
  return dir;
}

const std::string& shared_run() {
  static TempDir td("run");
  static std::string dir = [&] {
    std::string out = td.sub("run");
    CmdResult r = run("train --data " + shared_ds() + " --out " + out +
                      " --seed 3 --set max_iters=30 --set warmup_iters=5"
                      " --set log_every=10");
    REQUIRE(r.code == 0);
    return out;
  }();
  return dir;
}

}  // namespace

TEST_CASE("help exits 0, usage errors exit 1") {
  CHECK(run("--help").code == 0);
  CHECK(run("synth --help").code == 0);
  CHECK(run("").code == 1);               // subcommand required
  CHECK(run("frobnicate").code == 1);     // unknown subcommand
  CHECK(run("synth").code == 1);          // missing --out
  CHECK(run("train --data /tmp").code == 1);  // missing --out
  CmdResult r = run("synth --out /tmp/x --bogus-flag");
  CHECK(r.code == 1);
}

TEST_CASE("synth writes the documented layout") {
  TempDir td("layout");
  std::string ds = td.sub("ds");
  CmdResult r = run("synth --out " + ds + " --n 5 --size 64 --seed 2");
  CHECK(r.code == 0);
  CHECK(r.out.find("wrote 5 samples") != std::string::npos);
  for (int i = 1; i <= 5; ++i) {
    char img[64], msk[64];
    std::snprintf(img, sizeof img, "images/%06d.ppm", i);
    std::snprintf(msk, sizeof msk, "masks/%06d.pgm", i);
    CHECK(fs::exists(fs::path(ds) / img));
    CHECK(fs::exists(fs::path(ds) / msk));
  }
  CHECK(count_lines(slurp(ds + "/manifest.txt")) == 5);
  CHECK(fs::exists(ds + "/config.txt"));
  ImageU8 img = read_netpbm(ds + "/images/000001.ppm");
  CHECK(img.channels == 3);
  CHECK(img.h == 64);
  CHECK(img.w == 64);
  ImageU8 msk = read_netpbm(ds + "/masks/000001.pgm");
  CHECK(msk.channels == 1);

  // config errors from sugar flags exit 1
  CHECK(run("synth --out " + td.sub("bad") + " --n 0").code == 1);
}

TEST_CASE("synth is deterministic and thread-count invariant") {
  TempDir td("det");
  std::string a = td.sub("a"), b = td.sub("b"), c = td.sub("c"),
              d = td.sub("d");
  CHECK(run("synth --out " + a + " --n 4 --size 64 --seed 9").code == 0);
  CHECK(run("synth --out " + b + " --n 4 --size 64 --seed 9").code == 0);
  CHECK(tree_bytes(a) == tree_bytes(b));
  CHECK(run("synth --out " + c + " --n 4 --size 64 --seed 9",
            "TAMPERLOC_THREADS=1").code == 0);
  CHECK(tree_bytes(a) == tree_bytes(c));
  CHECK(run("synth --out " + d + " --n 4 --size 64 --seed 10").code == 0);
  CHECK(tree_bytes(a) != tree_bytes(d));
}

TEST_CASE("synth splices from an external corpus") {
  TempDir td("from");
  std::string src = td.sub("src");
  fs::copy(shared_ds(), src, fs::copy_options::recursive);
  fs::copy(src + "/masks", src + "/donor_masks", fs::copy_options::recursive);

  std::string a = td.sub("a"), b = td.sub("b");
  CmdResult r = run("synth --from " + src + " --out " + a +
                    " --n 4 --size 64 --seed 9");
  CHECK(r.code == 0);
  std::string manifest = slurp(a + "/manifest.txt");
  CHECK(count_lines(manifest) == 4);
  CHECK(manifest.find("host=0000") != std::string::npos);
  CHECK(manifest.find("donor=0000") != std::string::npos);
  CHECK(slurp(a + "/images/000004.ppm").substr(0, 2) == "P6");
  CHECK(slurp(a + "/masks/000001.pgm").substr(0, 2) == "P5");

  CmdResult r2 = run("synth --from " + src + " --out " + b +
                     " --n 4 --size 64 --seed 9");
  CHECK(r2.code == 0);
  CHECK(tree_bytes(a) == tree_bytes(b));

  CmdResult bad = run("synth --from " + td.sub("nope") + " --out " +
                      td.sub("x") + " --n 2");
  CHECK(bad.code == 2);
}

TEST_CASE("train writes artifacts and reports both splits") {
  const std::string& out = shared_run();
  CHECK(fs::exists(out + "/final.ckpt"));
  CHECK(fs::exists(out + "/loss_curve.csv"));
  CHECK(fs::exists(out + "/config.txt"));
  std::string csv = slurp(out + "/loss_curve.csv");
  CHECK(csv.rfind("iter,lr,loss,f1\n", 0) == 0);
  // rows: header, iters 1, 10, 20, 30
  CHECK(count_lines(csv) == 5);

  CHECK(run("train --data /nonexistent --out /tmp/never").code == 2);
}

TEST_CASE("train runs are reproducible from the resolved config") {
  TempDir td("repro");
  std::string again = td.sub("again");
  CmdResult r = run("train --data " + shared_ds() + " --out " + again +
                    " --config " + shared_run() + "/config.txt");
  CHECK(r.code == 0);
  CHECK(slurp(again + "/loss_curve.csv") ==
        slurp(shared_run() + "/loss_curve.csv"));
  CHECK(slurp(again + "/final.ckpt") == slurp(shared_run() + "/final.ckpt"));
}

TEST_CASE("train is thread-count invariant") {
  TempDir td("threads");
  std::string t1 = td.sub("t1"), t4 = td.sub("t4");
  std::string args = "train --data " + shared_ds() +
                     " --seed 3 --set max_iters=12 --set warmup_iters=3"
                     " --set log_every=4 --out ";
  CHECK(run(args + t1, "TAMPERLOC_THREADS=1").code == 0);
  CHECK(run(args + t4, "TAMPERLOC_THREADS=4").code == 0);
  CHECK(slurp(t1 + "/final.ckpt") == slurp(t4 + "/final.ckpt"));
  CHECK(slurp(t1 + "/loss_curve.csv") == slurp(t4 + "/loss_curve.csv"));
}

TEST_CASE("eval scores a checkpoint and perfect external predictions") {
  TempDir td("eval");
  std::string ev = td.sub("ev");
  CmdResult r = run("eval --ckpt " + shared_run() + "/final.ckpt --data " +
                    shared_ds() + " --out " + ev);
  CHECK(r.code == 0);
  CHECK(r.out.find("mean") != std::string::npos);
  CHECK(slurp(ev + "/metrics.txt") == r.out);
  CHECK(count_lines(slurp(ev + "/metrics.csv")) == 9);  // header + 8 images

  // ground truth fed back as predictions scores perfectly
  std::string preds = td.sub("preds");
  fs::create_directories(preds);
  for (const auto& e : fs::directory_iterator(shared_ds() + "/masks")) {
    fs::copy_file(e.path(), fs::path(preds) / e.path().filename());
  }
  std::string ev2 = td.sub("ev2");
  CmdResult r2 = run("eval --pred-dir " + preds + " --data " + shared_ds() +
                     " --out " + ev2);
  CHECK(r2.code == 0);
  std::istringstream csv(slurp(ev2 + "/metrics.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "image,auc,f1,iou");
  int rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    // auc is undefined ("nan") when a mask is single-class; f1 and iou
    // must still be exactly 1 for gt-as-prediction
    bool perfect =
        line.substr(6) == ",1,1,1" || line.substr(6) == ",nan,1,1";
    CHECK(perfect);
  }
  CHECK(rows == 8);

  // mode selection must be unambiguous
  CHECK(run("eval --data " + shared_ds() + " --out " + td.sub("x")).code == 1);
  CmdResult both = run("eval --ckpt a --pred-dir b --data " + shared_ds() +
                       " --out " + td.sub("y"));
  CHECK(both.code == 1);
  CHECK(both.out.find("exactly one") != std::string::npos);
  CHECK(run("eval --ckpt /nonexistent.ckpt --data " + shared_ds() +
            " --out " + td.sub("z")).code == 2);
}

TEST_CASE("infer writes maps matching the input dims") {
  TempDir td("infer");
  std::string out = td.sub("maps");
  std::string img = shared_ds() + "/images/000002.ppm";
  CmdResult r = run("infer --ckpt " + shared_run() + "/final.ckpt --out " +
                    out + " " + img);
  CHECK(r.code == 0);
  ImageU8 prob = read_netpbm(out + "/000002.prob.pgm");
  ImageU8 mask = read_netpbm(out + "/000002.mask.pgm");
  CHECK(prob.channels == 1);
  CHECK(prob.h == 64);
  CHECK(prob.w == 64);
  CHECK(mask.h == 64);
  CHECK(mask.w == 64);
  for (Index i = 0; i < mask.h * mask.w; ++i) {
    bool binary = mask.v[i] == 0 || mask.v[i] == 255;
    if (!binary) CHECK(binary);
  }

  // softmax probabilities are strictly positive, so threshold 0 fires
  // everywhere (the mask rule is strict >)
  std::string all = td.sub("all");
  CHECK(run("infer --ckpt " + shared_run() + "/final.ckpt --threshold 0"
            " --out " + all + " " + img).code == 0);
  ImageU8 m0 = read_netpbm(all + "/000002.mask.pgm");
  int on = 0;
  for (Index i = 0; i < m0.h * m0.w; ++i) on += m0.v[i] == 255;
  CHECK(on == m0.h * m0.w);
}

TEST_CASE("infer pads awkward dims only when asked") {
  TempDir td("pad");
  // 70x50 is not a multiple of 32 in either dim
  std::string odd = td.sub("odd.ppm");
  {
    ImageU8 img = ImageU8::make(50, 70, 3);
    for (Index y = 0; y < 50; ++y) {
      for (Index x = 0; x < 70; ++x) {
        img.at(y, x, 0) = std::uint8_t((3 * y + 5 * x) % 256);
        img.at(y, x, 1) = std::uint8_t((y * x) % 256);
        img.at(y, x, 2) = std::uint8_t((y + 7 * x) % 256);
      }
    }
    write_netpbm(odd, img);
  }
  std::string out = td.sub("maps");
  CmdResult bare = run("infer --ckpt " + shared_run() + "/final.ckpt --out " +
                       out + " " + odd);
  CHECK(bare.code == 1);
  CHECK(bare.out.find("--pad") != std::string::npos);

  CmdResult padded = run("infer --ckpt " + shared_run() +
                         "/final.ckpt --pad --out " + out + " " + odd);
  CHECK(padded.code == 0);
  ImageU8 prob = read_netpbm(out + "/odd.prob.pgm");
  CHECK(prob.h == 50);
  CHECK(prob.w == 70);

  // grayscale input is rejected as a config error
  std::string gray = td.sub("gray.pgm");
  write_netpbm(gray, ImageU8::make(64, 64, 1));
  CHECK(run("infer --ckpt " + shared_run() + "/final.ckpt --out " + out +
            " " + gray).code == 1);
}

TEST_CASE("eval and infer are deterministic across thread counts") {
  TempDir td("evdet");
  std::string e1 = td.sub("e1"), e4 = td.sub("e4");
  std::string args = "eval --ckpt " + shared_run() + "/final.ckpt --data " +
                     shared_ds() + " --out ";
  CHECK(run(args + e1, "TAMPERLOC_THREADS=1").code == 0);
  CHECK(run(args + e4, "TAMPERLOC_THREADS=4").code == 0);
  CHECK(tree_bytes(e1) == tree_bytes(e4));

  std::string i1 = td.sub("i1"), i4 = td.sub("i4");
  std::string iargs = "infer --ckpt " + shared_run() + "/final.ckpt " +
                      shared_ds() + "/images/000003.ppm --out ";
  CHECK(run(iargs + i1, "TAMPERLOC_THREADS=1").code == 0);
  CHECK(run(iargs + i4, "TAMPERLOC_THREADS=4").code == 0);
  CHECK(tree_bytes(i1) == tree_bytes(i4));
}
