#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "midnet/rng.hpp"
#include "midnet/tensor.hpp"
#include "midnet/verify.hpp"

using namespace midnet;

namespace {

Tensor random_tensor(const Shape& shape, Rng& rng, bool requires_grad = false, double lo = -1.0,
                     double hi = 1.0) {
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) v = rng.uniform(lo, hi);
    return Tensor::from_data(shape, std::move(data), requires_grad);
}

}  // namespace

TEST_CASE("matmul identity and annihilator") {
    Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    Tensor b = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor out = matmul(eye, b);
    for (std::size_t i = 0; i < 6; ++i) CHECK(out.data()[i] == b.data()[i]);

    Tensor zeros = Tensor::zeros({3, 2});
    Tensor out2 = matmul(b, zeros);
    for (double v : out2.data()) CHECK(v == 0.0);
}

TEST_CASE("matmul matches triple-loop reference") {
    Rng rng(11);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    Tensor c = matmul(a, b);
    const auto ref = verify::reference_matmul(a.data(), 3, 4, b.data(), 2);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(c.data()[i] - ref[i]) < 1e-12);
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({2, 3});
    try {
        matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2,3]") != std::string::npos);
    }
}

TEST_CASE("conv2d identity kernel") {
    Rng rng(12);
    Tensor x = random_tensor({1, 4, 4, 1}, rng);
    Tensor k = Tensor::from_data({1, 1, 1, 1}, {1.0});
    Tensor y = conv2d(x, k, 1, Padding::Same);
    REQUIRE(y.shape() == x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == doctest::Approx(x.data()[i]).epsilon(1e-15));
}

TEST_CASE("conv2d zero kernel output and kernel gradient") {
    Rng rng(13);
    Tensor x = random_tensor({1, 4, 4, 2}, rng);
    Tensor k = Tensor::zeros({3, 3, 2, 1}, true);
    Tensor y = conv2d(x, k, 1, Padding::Same);
    for (double v : y.data()) CHECK(v == 0.0);

    // With upstream gradient of all ones, dK[ki,kj,ci,0] is the correlation
    // of the (padded) input with a window of ones.
    backward(sum(y));
    const auto& grad = k.grad();
    for (std::size_t ki = 0; ki < 3; ++ki)
        for (std::size_t kj = 0; kj < 3; ++kj)
            for (std::size_t ci = 0; ci < 2; ++ci) {
                double expect = 0.0;
                for (std::size_t oh = 0; oh < 4; ++oh)
                    for (std::size_t ow = 0; ow < 4; ++ow) {
                        const long ih = static_cast<long>(oh + ki) - 1;
                        const long iw = static_cast<long>(ow + kj) - 1;
                        if (ih < 0 || iw < 0 || ih >= 4 || iw >= 4) continue;
                        expect += x.data()[((ih * 4) + iw) * 2 + ci];
                    }
                CHECK(grad[(ki * 3 + kj) * 2 + ci] == doctest::Approx(expect).epsilon(1e-12));
            }
}

TEST_CASE("conv2d matches nested-loop reference") {
    Rng rng(14);
    for (const bool same : {true, false}) {
        for (const int stride : {1, 2}) {
            Tensor x = random_tensor({1, 5, 5, 2}, rng);
            Tensor k = random_tensor({3, 3, 2, 3}, rng);
            Tensor y = conv2d(x, k, stride, same ? Padding::Same : Padding::Valid);
            verify::RefConvSpec spec{1, 5, 5, 2, 3, 3, 3, stride, same};
            std::size_t oh = 0, ow = 0;
            const auto ref = verify::reference_conv2d(x.data(), k.data(), spec, oh, ow);
            REQUIRE(y.shape() == Shape{1, oh, ow, 3});
            for (std::size_t i = 0; i < ref.size(); ++i)
                CHECK(std::abs(y.data()[i] - ref[i]) < 1e-12);
        }
    }
}

TEST_CASE("conv2d zero-size output is an error") {
    Tensor x = Tensor::zeros({1, 2, 2, 1});
    Tensor k = Tensor::zeros({3, 3, 1, 1});
    CHECK_THROWS_AS(conv2d(x, k, 1, Padding::Valid), ShapeError);
}

TEST_CASE("same padding puts the extra row on the high side") {
    // 4x4 input, stride 2, 3x3 kernel: pad total 1 -> top 0, bottom 1.
    Tensor x = Tensor::full({1, 4, 4, 1}, 1.0);
    Tensor k = Tensor::full({3, 3, 1, 1}, 1.0);
    Tensor y = conv2d(x, k, 2, Padding::Same);
    REQUIRE(y.shape() == Shape{1, 2, 2, 1});
    // Output (0,0) covers input rows/cols {0,1,2} fully: 9 ones.
    CHECK(y.at({0, 0, 0, 0}) == doctest::Approx(9.0));
    // Output (1,1) covers rows/cols {2,3} plus one padded row/col: 4 ones.
    CHECK(y.at({0, 1, 1, 0}) == doctest::Approx(4.0));
}

TEST_CASE("elementwise trivial values") {
    Tensor a = Tensor::from_data({3}, {-1.0, 0.0, 2.0});
    Tensor r = relu(a);
    CHECK(r.data() == std::vector<double>{0.0, 0.0, 2.0});

    Tensor c = Tensor::full({1, 4}, 3.7);
    Tensor s = softmax(c, 1);
    for (double v : s.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

    Tensor ones = Tensor::full({2, 2}, 1.0);
    CHECK(frobenius_sq(ones).item() == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("softmax argmax is shift invariant") {
    Tensor a = Tensor::from_data({1, 4}, {0.4, 1.3, -0.2, 0.9});
    Tensor b = Tensor::from_data({1, 4}, {100.4, 101.3, 99.8, 100.9});
    Tensor sa = softmax(a, 1);
    Tensor sb = softmax(b, 1);
    const auto argmax = [](const Tensor& t) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < t.numel(); ++j)
            if (t.data()[j] > t.data()[best]) best = j;
        return best;
    };
    CHECK(argmax(sa) == argmax(sb));
}

TEST_CASE("log rejects non-positive input") {
    Tensor a = Tensor::from_data({2}, {1.0, -0.5});
    CHECK_THROWS_AS(log(a), DomainError);
}

TEST_CASE("backward of sum of squares is 2x exactly") {
    Tensor x = Tensor::from_data({3}, {1.5, -2.0, 0.25}, true);
    backward(sum(mul(x, x)));
    CHECK(x.grad()[0] == 3.0);
    CHECK(x.grad()[1] == -4.0);
    CHECK(x.grad()[2] == 0.5);
}

TEST_CASE("backward of a constant leaves zero gradient") {
    Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
    Tensor c = Tensor::scalar(5.0);
    backward(c);
    CHECK(x.grad() == std::vector<double>{0.0, 0.0});
}

TEST_CASE("backward requires a scalar root") {
    Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
    Tensor y = mul(x, 2.0);
    CHECK_THROWS_AS(backward(y), ContractError);
}

TEST_CASE("repeated backward accumulates until zeroed") {
    Tensor x = Tensor::from_data({1}, {2.0}, true);
    backward(mul(x, 3.0));
    backward(mul(x, 3.0));
    CHECK(x.grad()[0] == 6.0);
    x.zero_grad();
    backward(mul(x, 3.0));
    CHECK(x.grad()[0] == 3.0);
}

TEST_CASE("backward is linear in the root") {
    Rng rng(15);
    Tensor x = random_tensor({4}, rng, true);
    auto f = [&x] { return frobenius_sq(x); };
    auto g = [&x] { return sum(mul(x, x)); };  // same value, distinct graph

    x.zero_grad();
    backward(add(mul(f(), 2.0), mul(g(), 3.0)));
    const std::vector<double> combined = x.grad();

    x.zero_grad();
    backward(f());
    const std::vector<double> gf = x.grad();
    x.zero_grad();
    backward(g());
    const std::vector<double> gg = x.grad();

    for (std::size_t i = 0; i < 4; ++i)
        CHECK(combined[i] == doctest::Approx(2.0 * gf[i] + 3.0 * gg[i]).epsilon(1e-12));
}

TEST_CASE("finite differences validate every op") {
    std::ostringstream sink;
    CHECK(verify::run_gradcheck(sink));
}

TEST_CASE("fixed seed and op sequence reproduce bits") {
    auto run = [] {
        Rng rng(99);
        Tensor a = random_tensor({3, 3}, rng, true);
        Tensor b = random_tensor({3, 3}, rng, true);
        Tensor loss = frobenius_sq(relu(matmul(a, b)));
        backward(loss);
        std::vector<double> out = a.grad();
        out.insert(out.end(), b.grad().begin(), b.grad().end());
        out.push_back(loss.item());
        return out;
    };
    CHECK(run() == run());
}

TEST_CASE("concat joins along both axes") {
    Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from_data({2, 2}, {5, 6, 7, 8});
    Tensor rows = concat({a, b}, 0);
    CHECK(rows.shape() == Shape{4, 2});
    CHECK(rows.data() == std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
    Tensor cols = concat({a, b}, 1);
    CHECK(cols.shape() == Shape{2, 4});
    CHECK(cols.data() == std::vector<double>{1, 2, 5, 6, 3, 4, 7, 8});
}

TEST_CASE("upsample and crop shapes") {
    Tensor a = Tensor::from_data({1, 2, 2, 1}, {1, 2, 3, 4});
    Tensor up = upsample_nearest(a, 2);
    CHECK(up.shape() == Shape{1, 4, 4, 1});
    CHECK(up.at({0, 0, 1, 0}) == 1.0);
    CHECK(up.at({0, 3, 3, 0}) == 4.0);
    Tensor cropped = crop_spatial(up, 3, 3);
    CHECK(cropped.shape() == Shape{1, 3, 3, 1});
    CHECK(cropped.at({0, 2, 2, 0}) == 4.0);
}

TEST_CASE("gather_rows and take_per_row pick the right entries") {
    Tensor a = Tensor::from_data({3, 2}, {1, 2, 3, 4, 5, 6});
    Tensor g = gather_rows(a, {2, 0});
    CHECK(g.data() == std::vector<double>{5, 6, 1, 2});
    Tensor t = take_per_row(a, {1, 0, 1});
    CHECK(t.data() == std::vector<double>{2, 3, 6});
}

TEST_CASE("float32 mode quantizes stored values") {
    Tensor a = Tensor::from_data({3}, {0.1, 0.2, 0.3});
    a.set_dtype(DType::F32);
    for (double v : a.data()) CHECK(v == static_cast<double>(static_cast<float>(v)));
    Tensor b = Tensor::from_data({3}, {1.0 / 3.0, 2.0 / 3.0, 0.7});
    Tensor c = mul(a, b);  // contagious: any f32 input gives an f32 result
    CHECK(c.dtype() == DType::F32);
    for (double v : c.data()) CHECK(v == static_cast<double>(static_cast<float>(v)));
}

TEST_CASE("tensor dump round-trips bit-exactly") {
    Rng rng(16);
    Tensor t = random_tensor({3, 4, 2}, rng);
    std::stringstream ss;
    write_tensor(ss, t);
    Tensor back = read_tensor(ss);
    CHECK(back.shape() == t.shape());
    CHECK(back.data() == t.data());

    const std::string path = std::filesystem::temp_directory_path() / "midnet_tensor_test.tensor";
    write_tensor_file(path, t);
    Tensor from_file = read_tensor_file(path);
    CHECK(from_file.data() == t.data());
    std::filesystem::remove(path);
}

TEST_CASE("no-grad mode skips graph construction") {
    Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
    Tensor y;
    {
        NoGradGuard guard;
        y = mul(x, 2.0);
    }
    CHECK_FALSE(y.requires_grad());
}
