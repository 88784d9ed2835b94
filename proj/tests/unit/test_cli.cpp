#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "egc/archive.hpp"
#include "egc/face_detect.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace egc;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(EGC_CLI) + " " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) out.push_back(line);
  return out;
}

std::vector<std::string> fields(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  for (std::string f; std::getline(in, f, ',');) out.push_back(f);
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Scratch directory with the shared fixtures, created once per process.
struct Fixture {
  fs::path dir;
  fs::path fer, cascade, hand_cascade, blank, one_face, two_faces, emotion, gender;

  Fixture() {
    dir = fs::temp_directory_path() / ("egc_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    fer = dir / "fer.csv";
    {
      Rng rng(1);
      std::ofstream out(fer);
      out << "emotion,pixels,Usage\n";
      for (int i = 0; i < 64; ++i) {
        out << i % 7 << ',';
        for (int p = 0; p < kFerPixels; ++p) out << (p ? " " : "") << rng.below(256);
        out << (i < 48 ? ",Training\n" : ",PublicTest\n");
      }
    }
    cascade = EGC_TEST_DATA "/frontalface.json";
    hand_cascade = dir / "hand.json";
    std::ofstream(hand_cascade) << cascade_to_json(oracle::eyes_cheeks_cascade());

    blank = dir / "blank.pgm";
    write_pgm(blank, GrayImage(120, 160, 128));
    GrayImage img(120, 160, 128);
    oracle::plant_face(img, 40, 50);
    one_face = dir / "one.pgm";
    write_pgm(one_face, img);
    oracle::plant_face(img, 110, 20);
    two_faces = dir / "two.pgm";
    write_pgm(two_faces, img);

    emotion = dir / "emotion.egc";
    gender = dir / "gender.egc";
    save_weights(build_model(ModelKind::Ensemble, 7, 3), emotion);
    save_weights(build_model(ModelKind::MiniXception, 2, 4), gender);
  }
  ~Fixture() { fs::remove_all(dir); }

  std::string predict_args(const fs::path& input, const std::string& extra = "") const {
    return "predict --weights-emotion " + emotion.string() + " --weights-gender " + gender.string() +
           " --cascade " + hand_cascade.string() + " --min-size 24 --min-neighbors 1 --input " + input.string() +
           " " + extra;
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

}  // namespace

TEST_CASE("usage errors exit 1") {
  const auto& f = fixture();
  CHECK(run("").code == 1);
  CHECK(run("frobnicate").code == 1);
  CHECK(run("--help").code == 0);
  CHECK(run("train --data " + f.fer.string()).code == 1);
  CHECK(run("train --task gender --model ensemble --data x.csv --out y.egc").code == 1);
  CHECK(run("train --task age --data " + f.fer.string() + " --out " + (f.dir / "x.egc").string()).code == 1);
  CHECK(run("train --epochs 0 --data " + f.fer.string() + " --out " + (f.dir / "x.egc").string()).code == 1);
  CHECK(run("bench --weights-emotion a --weights-gender b --cascade c --size 640by480").code == 1);
}

TEST_CASE("data and archive errors") {
  const auto& f = fixture();
  CHECK(run("train --data /nonexistent.csv --out " + (f.dir / "x.egc").string()).code == 2);
  CHECK(run("classify --weights /nonexistent.egc --input " + f.one_face.string()).code == 3);

  auto bytes = slurp(f.emotion);
  bytes[bytes.size() / 3] ^= 0x10;
  const auto corrupt = f.dir / "corrupt.egc";
  std::ofstream(corrupt, std::ios::binary) << bytes;
  CHECK(run("classify --weights " + corrupt.string() + " --input " + f.one_face.string()).code == 3);

  // A 2-class archive evaluated on the 7-class task.
  CHECK(run("eval --weights " + f.gender.string() + " --task emotion --data " + f.fer.string()).code == 3);
}

TEST_CASE("train writes an archive and a per-epoch trace") {
  const auto& f = fixture();
  const auto a = f.dir / "a.egc", b = f.dir / "b.egc";
  const auto first = run("train --task emotion --model ensemble --epochs 1 --batch 16 --seed 5 --data " +
                         f.fer.string() + " --out " + a.string());
  REQUIRE(first.code == 0);
  CHECK(fs::exists(a));
  const auto trace = lines(first.out);
  REQUIRE(trace.size() == 1);
  CHECK(fields(trace[0]).size() == 3);
  CHECK(fields(trace[0])[0] == "1");

  const auto second = run("train --task emotion --model ensemble --epochs 1 --batch 16 --seed 5 --data " +
                          f.fer.string() + " --out " + b.string());
  REQUIRE(second.code == 0);
  CHECK(slurp(a) == slurp(b));
  CHECK(load_weights(a).kind() == ModelKind::Ensemble);
}

TEST_CASE("eval renders the report") {
  const auto& f = fixture();
  const auto report = run("eval --weights " + f.emotion.string() + " --task emotion --data " + f.fer.string());
  REQUIRE(report.code == 0);
  const auto text = lines(report.out);

  // Normalized confusion rows: name followed by seven 2-decimal values.
  int rows = 0;
  for (const auto& line : text) {
    std::istringstream in(line);
    std::string name;
    in >> name;
    if (std::find(kEmotionNames.begin(), kEmotionNames.end(), name) == kEmotionNames.end()) continue;
    std::vector<double> values;
    for (double v; in >> v;) values.push_back(v);
    if (values.size() != 7) continue;
    ++rows;
    double sum = 0;
    for (double v : values) sum += v;
    CHECK(std::abs(sum - 1.0) <= 0.01 + 1e-9);
  }
  CHECK(rows == 7);

  // Per-class table: header plus exactly seven rows of four numbers.
  const auto header = std::find_if(text.begin(), text.end(),
                                   [](const std::string& l) { return l.find("precision") != std::string::npos; });
  REQUIRE(header != text.end());
  CHECK(std::distance(header, text.end()) == 8);
}

TEST_CASE("eval prints accuracy 1.000 for a perfectly predicted fixture") {
  const auto& f = fixture();
  const Model model = load_weights(f.emotion);
  std::ifstream in(f.fer);
  const auto rows = parse_fer_csv(in);
  const auto path = f.dir / "perfect.csv";
  {
    std::ofstream out(path);
    out << "emotion,pixels,Usage\n";
    for (const auto& r : rows) {
      const int label = argmax(model.predict(to_sample(r).image).data());
      out << label << ',';
      for (int p = 0; p < kFerPixels; ++p) out << (p ? " " : "") << static_cast<int>(r.pixels[p]);
      out << ",Training\n";
    }
  }
  const auto report = run("eval --weights " + f.emotion.string() + " --data " + path.string());
  REQUIRE(report.code == 0);
  CHECK(report.out.find("accuracy 1.000") != std::string::npos);
}

TEST_CASE("predict on a blank image with the real cascade prints nothing") {
  const auto& f = fixture();
  const auto r = run("predict --weights-emotion " + f.emotion.string() + " --weights-gender " + f.gender.string() +
                     " --cascade " + f.cascade.string() + " --input " + f.blank.string());
  CHECK(r.code == 0);
  CHECK(r.out.empty());
}

TEST_CASE("predict emits one line per planted face") {
  const auto& f = fixture();
  const auto one = run(f.predict_args(f.one_face));
  REQUIRE(one.code == 0);
  const auto l1 = lines(one.out);
  REQUIRE(l1.size() == 1);
  const auto v = fields(l1[0]);
  REQUIRE(v.size() == 10);
  CHECK(v[0] == "0");
  CHECK(std::abs(std::stoi(v[1]) - 40) <= 2);
  CHECK(std::abs(std::stoi(v[2]) - 50) <= 2);
  CHECK(std::find(kEmotionNames.begin(), kEmotionNames.end(), v[5]) != kEmotionNames.end());
  CHECK((v[7] == "female" || v[7] == "male"));

  const auto two = run(f.predict_args(f.two_faces));
  REQUIRE(two.code == 0);
  CHECK(lines(two.out).size() == 2);

  // Identical inputs give identical lines apart from the timing field.
  const auto again = run(f.predict_args(f.one_face));
  auto strip = [](const std::string& line) { return line.substr(0, line.rfind(',')); };
  CHECK(strip(lines(again.out)[0]) == strip(l1[0]));
}

TEST_CASE("predict over a directory and a frame stream") {
  const auto& f = fixture();
  const auto frames = f.dir / "frames";
  fs::create_directories(frames);
  fs::copy_file(f.one_face, frames / "a.pgm", fs::copy_options::overwrite_existing);
  std::ofstream(frames / "b.pgm") << "P6\n1 1\n255\nxxx";  // unreadable: warned and skipped
  fs::copy_file(f.two_faces, frames / "c.pgm", fs::copy_options::overwrite_existing);

  const auto annotated = f.dir / "annotated";
  const auto dir = run(f.predict_args(frames, "--annotate " + annotated.string()));
  REQUIRE(dir.code == 0);
  const auto dl = lines(dir.out);
  REQUIRE(dl.size() == 3);
  CHECK(fields(dl[0])[0] == "0");
  CHECK(fields(dl[1])[0] == "2");
  CHECK(fs::exists(annotated / "a.pgm"));
  CHECK(fs::exists(annotated / "c.pgm"));
  const GrayImage marked = read_pgm(annotated / "a.pgm");
  CHECK(std::count(marked.pixels.begin(), marked.pixels.end(), 255) > 0);

  const auto stream = f.dir / "stream.pgm";
  {
    std::ofstream out(stream, std::ios::binary);
    out << slurp(f.one_face) << slurp(f.blank) << slurp(f.two_faces);
  }
  const auto piped = run(f.predict_args("-", "< " + stream.string()));
  REQUIRE(piped.code == 0);
  const auto pl = lines(piped.out);
  REQUIRE(pl.size() == 3);
  CHECK(fields(pl[0])[0] == "0");
  CHECK(fields(pl[1])[0] == "2");
  CHECK(fields(pl[2])[0] == "2");
}

TEST_CASE("bench reports one sample per frame") {
  const auto& f = fixture();
  const auto r = run("bench --weights-emotion " + f.emotion.string() + " --weights-gender " + f.gender.string() +
                     " --cascade " + f.cascade.string() + " --frames 1 --size 160x120");
  REQUIRE(r.code == 0);
  const auto l = lines(r.out);
  std::map<std::string, std::vector<std::string>> rows;
  for (const auto& line : l) {
    const auto v = fields(line);
    if (v.size() == 5) rows[v[0]] = v;
  }
  REQUIRE(rows.count("total"));
  CHECK(rows["total"][1] == "1");
  const double detect = std::stod(rows["detect"][2]), classify = std::stod(rows["classify"][2]),
               total = std::stod(rows["total"][2]);
  CHECK(detect + classify <= total + 1e-3);
}

TEST_CASE("classify prints exact probabilities") {
  const auto& f = fixture();
  const auto r = run("classify --weights " + f.emotion.string() + " --input " + f.one_face.string());
  REQUIRE(r.code == 0);
  const auto v = fields(lines(r.out).at(0));
  REQUIRE(v.size() == 7);

  const Model model = load_weights(f.emotion);
  const Tensor want =
      model.predict(preprocess(resize_bilinear(read_pgm(f.one_face), kFaceSize, kFaceSize)));
  for (int k = 0; k < 7; ++k) CHECK(static_cast<float>(std::strtod(v[k].c_str(), nullptr)) == want[k]);
}
