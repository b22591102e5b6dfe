// Writes the small files the CLI tests run against.

#include <filesystem>
#include <iostream>

#include "qnn/qnn.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: qnn_cli_fixtures <dir>\n";
    return 2;
  }
  const std::filesystem::path dir = argv[1];
  std::filesystem::create_directories(dir);
  auto path = [&](const char* name) { return (dir / name).string(); };

  qnn::io::write_file(path("not_a_model.smf1"), std::vector<std::uint8_t>{'N', 'O', 'P', 'E', 1, 0, 0, 0});

  // int8 dot product that leaves the 16-bit accumulator for all-max inputs.
  {
    qnn::GraphBuilder b(qnn::ElementWidth::i8);
    const auto x = b.input({1, 4}, 0);
    b.output(b.add(qnn::OpKind::MatMul, {x, b.constant(qnn::Tensor<std::int8_t>({4, 1}, std::vector<std::int8_t>(4, 127), 0))}));
    qnn::save_model(path("overflow_i8.smf1"), b.build());
    qnn::save_stn1(path("overflow_in.stn1"), qnn::Tensor<std::int8_t>({1, 4}, std::vector<std::int8_t>(4, 127), 0));
    qnn::save_stn1(path("small_in.stn1"), qnn::Tensor<std::int8_t>({1, 4}, std::vector<std::int8_t>(4, 1), 0));
  }
  // Float model whose activation slope has no integer form.
  {
    qnn::GraphBuilder b(qnn::ElementWidth::f32);
    const auto x = b.input({1, 2});
    b.output(b.add(qnn::OpKind::LeakyRelu, {x}, qnn::Attributes{}.set_alpha(1.5)));
    qnn::save_model(path("steep_f32.smf1"), b.build());
    std::filesystem::create_directories(dir / "calib");
    qnn::save_stn1((dir / "calib" / "a.stn1").string(), qnn::Tensor<float>({1, 2}, std::vector<float>{0.5f, -0.5f}));
  }
  // Planes for the filter harness and a frame for intra prediction.
  {
    qnn::Plane p(48, 40, 500);
    for (int y = 0; y < p.height; ++y)
      for (int x = 0; x < p.width; ++x) p.at(x, y) = 300 + (7 * x + 3 * y) % 400;
    qnn::save_plane_stn1(path("orig.stn1"), p);
    qnn::Plane db = p;
    for (auto& v : db.samples) v += 5;
    qnn::save_plane_stn1(path("db.stn1"), db);
    qnn::save_plane_stn1(path("bs.stn1"), qnn::Plane(48, 40, 0));
    qnn::save_plane_stn1(path("frame.stn1"), qnn::Plane(64, 64, 512));
  }
  std::filesystem::create_directories(dir / "empty");
  return 0;
}
