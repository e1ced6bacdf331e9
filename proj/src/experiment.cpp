#include "mx/experiment.hpp"

#include "mx/error.hpp"

namespace mx {

using kernels::KernelConfig;

Operands make_operands(const KernelConfig& cfg, const SynthParams& synth)
{
    const KernelConfig c = kernels::resolve(cfg);
    SynthParams pa = synth, pb = synth;
    pb.seed = synth.seed ^ 0x9E3779B97F4A7C15ull;
    const DenseMatrix a = synth_lognormal(c.M, c.N, pa);
    const DenseMatrix b = synth_lognormal(c.N, c.P, pb);
    Operands o;
    if (!kernels::is_mx(c.kind)) {
        o.a = a;
        o.b = b;
        return o;
    }
    o.a = quantize_matrix(a, c.elem, c.k_sw, BlockAxis::along_cols);
    MxMatrix qb = quantize_matrix(b, c.elem, c.k_sw, BlockAxis::along_rows);
    if (c.kind == kernels::KernelKind::vmxdotp) qb = qb.transposed();
    o.b = std::move(qb);
    return o;
}

std::size_t count_mismatches(const DenseMatrix& x, const DenseMatrix& y)
{
    if (x.rows != y.rows || x.cols != y.cols || x.format != y.format)
        throw Error(ErrorCode::shape, "result and reference differ in shape or format");
    std::size_t n = 0;
    for (std::size_t i = 0; i < x.bits.size(); ++i) n += x.bits[i] != y.bits[i];
    return n;
}

PointResult run_point(const KernelConfig& cfg, const Operands& ops, const perf::CostTable& table, bool check)
{
    PointResult r;
    r.config = kernels::resolve(cfg);
    auto go = [&](const auto& a, const auto& b) {
        const auto kp = kernels::build(r.config);
        auto out = kernels::run(kp, a, b, true);
        r.report = perf::analyze(kp, out.trace, table);
        r.c = std::move(out.c);
        if (check) {
            r.mismatches = count_mismatches(r.c, kernels::reference(r.config, a, b));
            r.checked = true;
        }
    };
    if (const auto* a = std::get_if<MxMatrix>(&ops.a))
        go(*a, std::get<MxMatrix>(ops.b));
    else if (const auto* d = std::get_if<DenseMatrix>(&ops.a))
        go(*d, std::get<DenseMatrix>(ops.b));
    else
        throw Error(ErrorCode::config, "no operands");
    return r;
}

PointResult run_point(const KernelConfig& cfg, const SynthParams& synth, const perf::CostTable& table, bool check)
{
    return run_point(cfg, make_operands(cfg, synth), table, check);
}

std::vector<PointResult> run_sweep(const std::vector<KernelConfig>& cfgs, const SynthParams& synth,
                                   const perf::CostTable& table, bool check)
{
    for (const auto& c : cfgs) kernels::resolve(c); // fail before starting threads
    std::vector<PointResult> out(cfgs.size());
    std::vector<std::exception_ptr> errors(cfgs.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(cfgs.size()); ++i) {
        try {
            out[i] = run_point(cfgs[i], synth, table, check);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

} // namespace mx
