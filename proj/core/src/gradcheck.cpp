#include "sifm/gradcheck.hpp"

#include <cstdint>
#include <cstdio>
#include <ostream>
#include <utility>

#include "sifm/model.hpp"
#include "sifm/ops.hpp"

namespace sifm {

namespace {

// Forward x^2, backward deliberately pulls -2x g instead of +2x g. Only the
// self-test uses it, to prove a wrong backward rule cannot slip through.
template <typename S>
Tensor<S> sign_flipped_square(const Tensor<S>& x) {
  std::vector<S> out(x.values().begin(), x.values().end());
  for (S& v : out) v *= v;
  Tensor<S> y(x.shape(), std::move(out));
  if (Tape<S>* tp = Tape<S>::active(); tp && tp->should_record({&x})) {
    const std::int32_t ix = tp->track(x);
    const std::int32_t iy = tp->track_output(y);
    tp->record(iy, [x, ix, iy](Tape<S>& t) {
      std::span<const S> g = t.grad_of(iy);
      std::span<const S> xv = x.values();
      S* dx = t.grad_buffer(ix).data();
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] -= S(2) * xv[i] * g[i];
    });
  }
  return y;
}

const MultiGranularitySample& micro_sample() {
  static const MultiGranularitySample sample = [] {
    SynthConfig sc;
    sc.height = 8;
    sc.width = 8;
    sc.num_days = 400;
    sc.rng_seed = 5;
    return make_sample(synth_generate(sc), 200);
  }();
  return sample;
}

ModelConfig micro_cfg() {
  ModelConfig cfg;
  cfg.height = 8;
  cfg.width = 8;
  cfg.codec.stem_channels = 8;
  cfg.codec.num_merge_stages = 1;
  cfg.codec.attn_window = 2;
  cfg.codec.heads_per_stage = {1, 2};
  cfg.codec.token_dim = 8;
  cfg.fusion.d = 16;
  cfg.fusion.num_layers = 1;
  cfg.fusion.num_heads = 2;
  return cfg;
}

template <typename Builder>
void run_case(std::vector<FdReport>& out, Rng& rng, std::string name,
              std::vector<Shape> shapes, Builder&& builder, FdOptions opts = {}) {
  out.push_back(fd_check(std::move(name), shapes, std::forward<Builder>(builder), rng, opts));
}

}  // namespace

std::vector<FdReport> run_gradcheck(const GradcheckOptions& opts) {
  std::vector<FdReport> out;
  Rng rng(opts.rng_seed);

  run_case(out, rng, "op.matmul", {{3, 4}, {4, 5}}, [](auto leaves) {
    return sum_all(matmul(leaves[0], leaves[1]));
  });
  run_case(out, rng, "op.matmul_batched", {{2, 3, 4}, {2, 4, 5}}, [](auto leaves) {
    return sum_all(matmul(leaves[0], leaves[1]));
  });
  // sum_all is linear, so elementwise payloads go through gelu to keep the
  // incoming cotangent non-constant.
  run_case(out, rng, "op.add_broadcast", {{3, 4}, {4}}, [](auto leaves) {
    return sum_all(gelu(add(leaves[0], leaves[1])));
  });
  run_case(out, rng, "op.sub_broadcast", {{3, 4}, {1}}, [](auto leaves) {
    return sum_all(gelu(sub(leaves[0], leaves[1])));
  });
  run_case(out, rng, "op.mul", {{2, 5}, {2, 5}}, [](auto leaves) {
    return sum_all(mul(leaves[0], leaves[1]));
  });
  run_case(out, rng, "op.scale", {{7}}, [](auto leaves) {
    using S = typename std::remove_reference_t<decltype(leaves[0])>::value_type;
    return sum_all(gelu(scale(leaves[0], static_cast<S>(-1.7))));
  });
  run_case(out, rng, "op.gelu", {{9}}, [](auto leaves) { return sum_all(gelu(leaves[0])); });
  run_case(out, rng, "op.layer_norm", {{4, 6}, {6}, {6}}, [](auto leaves) {
    return sum_all(gelu(layer_norm(leaves[0], leaves[1], leaves[2])));
  });
  run_case(out, rng, "op.softmax", {{3, 5}}, [](auto leaves) {
    return sum_all(mul(softmax(leaves[0]), leaves[0]));
  });
  run_case(out, rng, "op.softmax_masked", {{2, 6}}, [](auto leaves) {
    using S = typename std::remove_reference_t<decltype(leaves[0])>::value_type;
    const S off = static_cast<S>(kMaskOff);
    const S z = S(0);
    Tensor<S> mask({2, 6}, {z, z, off, z, off, z, off, z, z, off, z, z});
    return sum_all(mul(softmax(add(leaves[0], mask)), leaves[0]));
  });
  run_case(out, rng, "op.reshape", {{2, 6}}, [](auto leaves) {
    return sum_all(gelu(reshape(leaves[0], {3, 4})));
  });
  run_case(out, rng, "op.transpose", {{2, 3, 4}}, [](auto leaves) {
    return sum_all(gelu(transpose(leaves[0], {2, 0, 1})));
  });
  run_case(out, rng, "op.slice", {{4, 5}}, [](auto leaves) {
    return sum_all(gelu(slice(leaves[0], 0, 1, 2)));
  });
  run_case(out, rng, "op.concat", {{2, 3}, {1, 3}}, [](auto leaves) {
    return sum_all(gelu(concat({leaves[0], leaves[1]}, 0)));
  });
  run_case(out, rng, "op.mean_axis", {{3, 4}}, [](auto leaves) {
    return sum_all(gelu(mean_axis(leaves[0], 1)));
  });
  run_case(out, rng, "op.sum_all", {{3, 3}}, [](auto leaves) {
    return sum_all(mul(leaves[0], leaves[0]));
  });
  run_case(out, rng, "op.mean_all", {{7}}, [](auto leaves) {
    return mean_all(mul(leaves[0], leaves[0]));
  });
  run_case(out, rng, "op.gather_rows", {{5, 3}}, [](auto leaves) {
    static constexpr std::int64_t rows[] = {3, 0, 3};  // repeat exercises scatter-add
    return sum_all(gelu(gather_rows(leaves[0], rows)));
  });
  run_case(out, rng, "op.mse", {{3, 4}, {3, 4}}, [](auto leaves) {
    return mse(leaves[0], leaves[1]);
  });

  if (opts.include_model) {
    const ModelConfig cfg = micro_cfg();
    const MultiGranularitySample& sample = micro_sample();
    std::vector<Shape> shapes;
    {
      auto proto = ModelParams<float>::shaped(cfg);
      proto.for_each([&shapes](const std::string&, Tensor<float>& t) { shapes.push_back(t.shape()); });
    }
    FdOptions mo;
    mo.init_lo = -0.2;
    mo.init_hi = 0.2;
    mo.max_coords_per_leaf = opts.model_coords_per_leaf;
    run_case(
        out, rng, "model.loss",
        std::move(shapes),
        [&](auto leaves) {
          using S = typename std::remove_reference_t<decltype(leaves[0])>::value_type;
          auto p = ModelParams<S>::shaped(cfg);
          std::size_t i = 0;
          p.for_each([&](const std::string&, Tensor<S>& t) { t = leaves[i++]; });
          auto pred = forward_sifm(sample.inputs, p, cfg);
          return loss_sifm(pred, sample.targets);
        },
        mo);
  }

  if (opts.inject_fault) {
    run_case(out, rng, kFaultCaseName, {{6}}, [](auto leaves) {
      return sum_all(sign_flipped_square(leaves[0]));
    });
  }

  return out;
}

bool gradcheck_passed(std::span<const FdReport> reports) {
  for (const FdReport& r : reports)
    if (!r.pass) return false;
  return true;
}

void print_gradcheck(std::ostream& os, std::span<const FdReport> reports) {
  std::size_t failed = 0;
  double seconds = 0.0;
  for (const FdReport& r : reports) {
    os << fd_report_line(r) << "\n";
    if (!r.pass) ++failed;
    seconds += r.seconds;
  }
  os << reports.size() << " checks, " << (reports.size() - failed) << " passed, " << failed
     << " failed";
  char buf[32];
  std::snprintf(buf, sizeof buf, " (%.2fs)", seconds);
  os << buf << "\n";
}

}  // namespace sifm
