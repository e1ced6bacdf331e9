#include "mx/error.hpp"
#include "mx/experiment.hpp"
#include "mx/kernels.hpp"
#include "mx/perf.hpp"
#include "mx/rvv/machine.hpp"
#include "mx/synth.hpp"
#include "mx/tensor_io.hpp"
#include "mx/verify.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

using namespace mx;
using json = nlohmann::ordered_json;
using kernels::KernelConfig;
using kernels::KernelKind;

namespace {

enum Exit { ok = 0, mismatch = 2, config_error = 3, io_error = 4 };

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text)
{
    if (path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out || !(out << text)) throw Error(ErrorCode::io, "cannot write " + path);
}

FormatKind format_arg(const std::string& s)
{
    const auto f = parse_format(s);
    if (!f) throw Error(ErrorCode::config, "unknown format '" + s + "'");
    return *f;
}

KernelKind kernel_arg(const std::string& s)
{
    const auto k = kernels::parse_kernel(s);
    if (!k) throw Error(ErrorCode::config, "unknown kernel '" + s + "'");
    return *k;
}

BlockAxis axis_arg(const std::string& s)
{
    if (s == "cols") return BlockAxis::along_cols;
    if (s == "rows") return BlockAxis::along_rows;
    throw Error(ErrorCode::config, "axis must be 'rows' or 'cols'");
}

DenseMatrix transpose(const DenseMatrix& d)
{
    DenseMatrix t(d.cols, d.rows, d.format);
    for (std::size_t r = 0; r < d.rows; ++r)
        for (std::size_t c = 0; c < d.cols; ++c) t.at(c, r) = d.at(r, c);
    return t;
}

// Kernel options shared by matmul and bench. Flags given on the command line
// override the JSON config file.
struct KernelFlags {
    std::string config_path;
    std::string kernel, fmt, acc;
    std::size_t k = 0;
    unsigned flen = 0;
    std::size_t m_tile = 0, p_tile = 0, unroll = 0;

    void add(CLI::App* app, bool with_kernel = true)
    {
        app->add_option("--config", config_path, "kernel config JSON file");
        if (with_kernel)
            app->add_option("--kernel", kernel, "rvv-baseline|spatz-baseline|vmxdotp|plain-fp32|plain-bf16");
        app->add_option("--fmt", fmt, "element format e5m2|e4m3|e2m1");
        app->add_option("--acc", acc, "accumulator fp32|bf16");
        app->add_option("--k", k, "software block size");
        app->add_option("--flen", flen, "scalar FP register width 32|64");
        app->add_option("--m-tile", m_tile);
        app->add_option("--p-tile", p_tile);
        app->add_option("--unroll", unroll);
    }

    KernelConfig config() const
    {
        KernelConfig c = config_path.empty() ? KernelConfig{} : KernelConfig::from_json(read_file(config_path));
        if (!kernel.empty()) c.kind = kernel_arg(kernel);
        if (!fmt.empty()) c.elem = format_arg(fmt);
        if (!acc.empty()) c.acc = format_arg(acc);
        if (k) c.k_sw = k;
        if (flen) c.flen = flen;
        if (m_tile) c.m_tile = m_tile;
        if (p_tile) c.p_tile = p_tile;
        if (unroll) c.unroll = unroll;
        return c;
    }
};

perf::CostTable cost_table(const std::string& path)
{
    return path.empty() ? perf::CostTable::defaults() : perf::CostTable::from_json(read_file(path));
}

json manifest;

int cmd_synth(std::size_t rows, std::size_t cols, const SynthParams& p, const std::string& fmt, const std::string& out)
{
    DenseMatrix d = synth_lognormal(rows, cols, p);
    if (!fmt.empty() && format_arg(fmt) != FormatKind::fp32) d = d.converted(format_arg(fmt));
    save_tensor(out, d);
    return ok;
}

int cmd_quantize(const std::string& in, const std::string& out, const std::string& fmt, std::size_t k,
                 const std::string& axis, bool transposed, bool as_json)
{
    const Tensor t = load_tensor(in);
    const auto* src = std::get_if<DenseMatrix>(&t);
    if (!src) throw Error(ErrorCode::config, in + " is already an MX tensor");
    DenseMatrix d = src->format == FormatKind::fp32 ? *src : src->converted(FormatKind::fp32);
    if (transposed) d = transpose(d);
    const MxMatrix q = quantize_matrix(d, format_arg(fmt), k, axis_arg(axis));
    save_tensor(out, q);

    const DenseMatrix back = q.dequantize();
    double max_err = 0, sum_err = 0, max_rel = 0;
    for (std::size_t i = 0; i < d.bits.size(); ++i) {
        const double x = decode(d.bits[i], FormatKind::fp32).to_double();
        const double y = decode(back.bits[i], back.format).to_double();
        const double e = std::fabs(x - y);
        max_err = std::max(max_err, e);
        sum_err += e;
        if (x != 0) max_rel = std::max(max_rel, e / std::fabs(x));
    }
    const double mean_err = d.bits.empty() ? 0.0 : sum_err / double(d.bits.size());
    if (as_json) {
        json j{{"rows", q.rows()}, {"cols", q.cols()},       {"format", name(q.format())},
               {"k", q.k()},       {"max_abs_error", max_err}, {"mean_abs_error", mean_err},
               {"max_rel_error", max_rel}};
        std::cout << j.dump(2) << "\n";
    } else {
        std::printf("%zux%zu %s k=%zu\nmax_abs_error %.9g\nmean_abs_error %.9g\nmax_rel_error %.9g\n", q.rows(),
                    q.cols(), std::string(name(q.format())).c_str(), q.k(), max_err, mean_err, max_rel);
    }
    return ok;
}

int cmd_matmul(const std::string& a_path, const std::string& b_path, const KernelFlags& flags, bool check,
               const std::string& report, const std::string& csv, const std::string& out, const std::string& costs,
               const std::string& trace_path)
{
    KernelConfig base = flags.config();
    const Tensor a = load_tensor(a_path), b = load_tensor(b_path);
    if (a.index() != b.index()) throw Error(ErrorCode::config, "A and B must both be MX tensors or both dense");
    const auto table = cost_table(costs);

    Operands ops;
    KernelConfig cfg;
    if (const auto* am = std::get_if<MxMatrix>(&a)) {
        cfg = kernels::config_for(base, *am, std::get<MxMatrix>(b));
        ops.a = *am;
        ops.b = std::get<MxMatrix>(b);
    } else {
        const auto& ad = std::get<DenseMatrix>(a);
        const auto& bd = std::get<DenseMatrix>(b);
        if (!flags.kernel.empty() || !flags.config_path.empty()) {
            cfg = kernels::config_for(base, ad, bd);
        } else {
            base.kind = KernelKind::plain_fp32;
            cfg = kernels::config_for(base, ad, bd);
        }
        ops.a = ad;
        ops.b = bd;
    }
    const PointResult r = run_point(cfg, ops, table, check);
    if (!out.empty()) save_tensor(out, r.c);
    if (!report.empty()) {
        json j = json::parse(r.report.to_json());
        j["config"] = json::parse(r.config.to_json());
        if (r.checked) j["mismatches"] = r.mismatches;
        write_file(report, j.dump(2) + "\n");
    }
    if (!csv.empty()) write_file(csv, r.report.to_csv());
    if (!trace_path.empty()) {
        const auto kp = kernels::build(r.config);
        const auto run = std::holds_alternative<MxMatrix>(a)
                             ? kernels::run(kp, std::get<MxMatrix>(ops.a), std::get<MxMatrix>(ops.b))
                             : kernels::run(kp, std::get<DenseMatrix>(ops.a), std::get<DenseMatrix>(ops.b));
        std::ostringstream ts;
        ts << "pc,mnemonic,sew,lmul,vl\n";
        for (const auto& e : run.trace)
            ts << e.pc << ',' << rvv::info(kp.program.code[e.pc].op).mnemonic << ',' << e.vtype.sew << ','
               << e.vtype.lmul_log2 << ',' << e.vl << '\n';
        write_file(trace_path, ts.str());
    }
    const std::string fmts = kernels::is_mx(r.config.kind)
                                 ? std::string(name(r.config.elem)) + "/" + std::string(name(r.config.acc))
                                 : std::string(name(r.config.acc));
    std::printf("%s %zux%zux%zu %s: %llu cycles, %.2f FLOP/cycle, utilization %.3f\n",
                std::string(kernels::name(r.config.kind)).c_str(), r.config.M, r.config.N, r.config.P, fmts.c_str(),
                static_cast<unsigned long long>(r.report.total), r.report.flop_per_cycle, r.report.utilization);
    if (r.checked) {
        if (r.mismatches) {
            std::fprintf(stderr, "check FAILED: %zu of %zu elements differ from the reference\n", r.mismatches,
                         r.c.bits.size());
            return mismatch;
        }
        std::printf("check passed\n");
    }
    return ok;
}

std::vector<std::string> split_list(const std::vector<std::string>& items)
{
    std::vector<std::string> out;
    for (const auto& s : items) {
        std::stringstream ss(s);
        std::string tok;
        while (std::getline(ss, tok, ','))
            if (!tok.empty()) out.push_back(tok);
    }
    return out;
}

struct BenchSpec {
    std::vector<std::string> kernels{"rvv-baseline", "spatz-baseline", "vmxdotp", "plain-fp32", "plain-bf16"};
    std::vector<std::string> formats{"e4m3"};
    std::vector<std::string> accs{"fp32", "bf16"};
    std::vector<std::size_t> ns{32, 64, 128, 256, 512};
    std::size_t M = 64, P = 64;
    SynthParams synth;
};

// Sweep file: {"kernels": [...], "formats": [...], "accs": [...], "N": [...],
// "M": 64, "P": 64, "seed": 1, "mu": 0, "sigma": 1, "base": {kernel config}}.
void load_sweep(const std::string& path, BenchSpec& s, KernelConfig& base)
{
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::parse, path + ": " + e.what());
    }
    try {
        for (auto it = j.begin(); it != j.end(); ++it) {
            const auto& k = it.key();
            if (k == "kernels") s.kernels = it->get<std::vector<std::string>>();
            else if (k == "formats") s.formats = it->get<std::vector<std::string>>();
            else if (k == "accs") s.accs = it->get<std::vector<std::string>>();
            else if (k == "N") s.ns = it->get<std::vector<std::size_t>>();
            else if (k == "M") s.M = it->get<std::size_t>();
            else if (k == "P") s.P = it->get<std::size_t>();
            else if (k == "seed") s.synth.seed = it->get<std::uint64_t>();
            else if (k == "mu") s.synth.mu = it->get<double>();
            else if (k == "sigma") s.synth.sigma = it->get<double>();
            else if (k == "base") base = KernelConfig::from_json(it->dump());
            else throw Error(ErrorCode::parse, path + ": unknown key '" + k + "'");
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::parse, path + ": " + e.what());
    }
}

int cmd_bench(BenchSpec s, KernelFlags flags, const std::string& sweep, const std::string& fmt_out,
              const std::string& out, bool check, const std::string& costs)
{
    KernelConfig base = flags.config();
    if (!sweep.empty()) load_sweep(sweep, s, base);
    const auto table = cost_table(costs);

    std::vector<KernelConfig> cfgs;
    for (const auto& kn : s.kernels) {
        const KernelKind kind = kernel_arg(kn);
        for (const auto& fn : kernels::is_mx(kind) ? s.formats : std::vector<std::string>{"e4m3"})
            for (const auto& an : s.accs)
                for (std::size_t n : s.ns) {
                    KernelConfig c = base;
                    c.kind = kind;
                    c.elem = format_arg(fn);
                    c.acc = format_arg(an);
                    c.M = s.M;
                    c.P = s.P;
                    c.N = n;
                    if (kind == KernelKind::plain_fp32 && c.acc != FormatKind::fp32) continue;
                    if (kind == KernelKind::plain_bf16 && c.acc != FormatKind::bf16) continue;
                    try {
                        kernels::resolve(c);
                    } catch (const Error& e) {
                        std::fprintf(stderr, "skipping %s %s/%s N=%zu: %s\n", kn.c_str(), fn.c_str(), an.c_str(), n,
                                     e.what());
                        continue;
                    }
                    cfgs.push_back(c);
                }
    }
    if (cfgs.empty()) throw Error(ErrorCode::config, "the sweep has no valid points");
    const auto results = run_sweep(cfgs, s.synth, table, check);

    // Baseline cycles for the speedup column: rvv-baseline with the same
    // element format, accumulator and N.
    std::map<std::tuple<FormatKind, FormatKind, std::size_t>, std::uint64_t> rvv_cycles;
    for (const auto& r : results)
        if (r.config.kind == KernelKind::rvv_baseline)
            rvv_cycles[{r.config.elem, r.config.acc, r.config.N}] = r.report.total;
    auto speedup = [&](const PointResult& r) -> std::optional<double> {
        auto it = rvv_cycles.find({r.config.elem, r.config.acc, r.config.N});
        if (it == rvv_cycles.end() && !kernels::is_mx(r.config.kind))
            it = rvv_cycles.find({FormatKind::fp8_e4m3, r.config.acc, r.config.N});
        if (it == rvv_cycles.end()) return std::nullopt;
        return double(it->second) / double(r.report.total);
    };

    std::size_t bad = 0;
    std::ostringstream os;
    if (fmt_out == "json") {
        json rows = json::array();
        for (const auto& r : results) {
            json row{{"kernel", kernels::name(r.config.kind)},
                     {"format", kernels::is_mx(r.config.kind) ? json(name(r.config.elem)) : json(nullptr)},
                     {"acc", name(r.config.acc)},
                     {"flen", r.config.flen},
                     {"M", r.config.M},
                     {"N", r.config.N},
                     {"P", r.config.P},
                     {"total_cycles", r.report.total},
                     {"flops", r.report.flops},
                     {"flop_per_cycle", r.report.flop_per_cycle},
                     {"peak_flop_per_cycle", r.report.peak_flop_per_cycle},
                     {"utilization", r.report.utilization}};
            const auto sp = speedup(r);
            row["speedup_vs_rvv_baseline"] = sp ? json(*sp) : json(nullptr);
            if (r.checked) row["mismatches"] = r.mismatches;
            rows.push_back(row);
            bad += r.mismatches;
        }
        os << rows.dump(2) << "\n";
    } else {
        os << "kernel,format,acc,flen,M,N,P,total_cycles,flops,flop_per_cycle,peak_flop_per_cycle,utilization,"
              "speedup_vs_rvv_baseline";
        if (check) os << ",mismatches";
        os << "\n";
        for (const auto& r : results) {
            char buf[256];
            std::snprintf(buf, sizeof buf, "%s,%s,%s,%u,%zu,%zu,%zu,%llu,%llu,%.6f,%.1f,%.6f,",
                          std::string(kernels::name(r.config.kind)).c_str(),
                          kernels::is_mx(r.config.kind) ? std::string(name(r.config.elem)).c_str() : "",
                          std::string(name(r.config.acc)).c_str(), r.config.flen, r.config.M, r.config.N, r.config.P,
                          static_cast<unsigned long long>(r.report.total),
                          static_cast<unsigned long long>(r.report.flops), r.report.flop_per_cycle,
                          r.report.peak_flop_per_cycle, r.report.utilization);
            os << buf;
            if (const auto sp = speedup(r)) {
                std::snprintf(buf, sizeof buf, "%.4f", *sp);
                os << buf;
            }
            if (check) os << ',' << r.mismatches;
            os << "\n";
            bad += r.mismatches;
        }
    }
    write_file(out, os.str());
    if (bad) {
        std::fprintf(stderr, "check FAILED: %zu mismatching elements across the sweep\n", bad);
        return mismatch;
    }
    return ok;
}

int cmd_verify(const VerifyOptions& opts, const std::string& out)
{
    const auto rep = verify(opts);
    write_file(out, rep.to_json() + "\n");
    for (const auto& c : rep.checks)
        if (c.failures) std::fprintf(stderr, "FAIL %s: %s\n", c.name.c_str(), c.first_failure.c_str());
    return rep.pass() ? ok : mismatch;
}

int cmd_run(const std::string& prog_path, unsigned vlen, unsigned flen, std::size_t mem, const std::string& out,
            const std::string& trace_path)
{
    const auto prog = rvv::parse_program(read_file(prog_path));
    rvv::VectorMachine m(rvv::MachineConfig{vlen, flen, mem});
    const auto res = rvv::run_program(m, prog, {!trace_path.empty()});
    write_file(out, rvv::register_dump_json(m) + "\n");
    if (!trace_path.empty()) {
        std::ostringstream ts;
        ts << "pc,mnemonic,sew,lmul,vl\n";
        for (const auto& e : res.trace)
            ts << e.pc << ',' << rvv::info(prog.code[e.pc].op).mnemonic << ',' << e.vtype.sew << ','
               << e.vtype.lmul_log2 << ',' << e.vl << '\n';
        write_file(trace_path, ts.str());
    }
    return ok;
}

int cmd_program(const KernelFlags& flags, std::size_t M, std::size_t N, std::size_t P, const std::string& out)
{
    KernelConfig c = flags.config();
    if (M) c.M = M;
    if (N) c.N = N;
    if (P) c.P = P;
    const auto kp = kernels::build(c);
    std::ostringstream os;
    os << "# " << kernels::name(kp.config.kind) << " " << kp.config.M << "x" << kp.config.N << "x" << kp.config.P
       << " elem=" << name(kp.config.elem) << " acc=" << name(kp.config.acc) << " flen=" << kp.config.flen
       << " m_tile=" << kp.config.m_tile << " p_tile=" << kp.config.p_tile << " unroll=" << kp.unroll << "\n";
    for (const auto& r : kp.regions)
        os << "# " << r.name << " @" << r.offset << " " << r.bytes << " bytes: " << r.layout << "\n";
    for (const auto& [role, reg] : kp.vregs) os << "# v" << reg << " = " << role << "\n";
    os << rvv::format_program(kp.program);
    write_file(out, os.str());
    return ok;
}

int exit_for(const Error& e)
{
    return e.code() == ErrorCode::io ? io_error : config_error;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"MX matrix-multiply simulator and performance model"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string manifest_path;
    app.add_option("--manifest", manifest_path, "write a JSON record of this invocation");

    std::uint64_t seed = 1;
    double mu = 0.0, sigma = 1.0;

    auto* synth = app.add_subcommand("synth", "write a seeded log-normal dense tensor");
    std::size_t rows = 0, cols = 0;
    std::string synth_out, synth_fmt;
    synth->add_option("--rows", rows)->required();
    synth->add_option("--cols", cols)->required();
    synth->add_option("--seed", seed);
    synth->add_option("--mu", mu);
    synth->add_option("--sigma", sigma);
    synth->add_option("--dtype", synth_fmt, "fp32 (default), bf16 or fp16");
    synth->add_option("-o,--out", synth_out)->required();

    auto* quant = app.add_subcommand("quantize", "quantize a dense tensor into MX blocks");
    std::string q_in, q_out, q_fmt = "e4m3", q_axis = "cols";
    std::size_t q_k = 32;
    bool q_transpose = false, q_json = false;
    quant->add_option("-i,--in", q_in)->required();
    quant->add_option("-o,--out", q_out)->required();
    quant->add_option("--fmt", q_fmt, "e5m2|e4m3|e2m1");
    quant->add_option("--k", q_k, "block size");
    quant->add_option("--axis", q_axis, "cols (blocks run along a row) or rows");
    quant->add_flag("--transpose", q_transpose, "transpose before quantizing");
    quant->add_flag("--json", q_json, "print error statistics as JSON");

    auto* mm = app.add_subcommand("matmul", "run a kernel on the simulator");
    std::string mm_a, mm_b, mm_report, mm_csv, mm_out, mm_costs, mm_trace;
    bool mm_check = false;
    KernelFlags mm_flags;
    mm->add_option("--a", mm_a)->required();
    mm->add_option("--b", mm_b)->required();
    mm_flags.add(mm);
    mm->add_flag("--check", mm_check, "compare against the reference, exit 2 on mismatch");
    mm->add_option("--report", mm_report, "JSON cycle report path ('-' for stdout)");
    mm->add_option("--csv", mm_csv, "CSV instruction-class breakdown path");
    mm->add_option("--trace", mm_trace, "CSV execution trace path");
    mm->add_option("--cost-table", mm_costs, "cost table JSON overrides");
    mm->add_option("-o,--out", mm_out, "result tensor path");

    auto* bench = app.add_subcommand("bench", "sweep kernels over N and report modeled throughput");
    BenchSpec spec;
    std::vector<std::string> b_kernels, b_formats, b_accs;
    std::string b_sweep, b_format = "csv", b_out = "-", b_costs;
    bool b_check = false;
    KernelFlags b_flags;
    b_flags.add(bench, false);
    bench->add_option("--kernels", b_kernels, "comma-separated kernel list");
    bench->add_option("--formats", b_formats, "comma-separated element formats");
    bench->add_option("--accs", b_accs, "comma-separated accumulators");
    bench->add_option("--N", spec.ns, "inner dimensions")->delimiter(',');
    bench->add_option("--M", spec.M);
    bench->add_option("--P", spec.P);
    bench->add_option("--seed", seed);
    bench->add_option("--sweep", b_sweep, "sweep JSON file");
    bench->add_option("--format", b_format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    bench->add_option("-o,--out", b_out);
    bench->add_option("--cost-table", b_costs);
    bench->add_flag("--check", b_check);

    auto* ver = app.add_subcommand("verify", "codec, instruction and kernel self-checks");
    VerifyOptions vopts;
    std::string v_out = "-";
    ver->add_option("--seed", vopts.seed);
    ver->add_option("--fuzz-cases", vopts.fuzz_cases, "cases per vmxdotp variant and format");
    ver->add_option("--kernel-n", vopts.kernel_n);
    ver->add_option("-o,--out", v_out);

    auto* run = app.add_subcommand("run", "execute an assembly program and dump the registers");
    std::string r_prog, r_out = "-", r_trace;
    unsigned r_vlen = 512, r_flen = 64;
    std::size_t r_mem = 128 * 1024;
    run->add_option("program", r_prog)->required();
    run->add_option("--vlen", r_vlen);
    run->add_option("--flen", r_flen);
    run->add_option("--mem", r_mem, "memory bytes");
    run->add_option("-o,--out", r_out);
    run->add_option("--trace", r_trace);

    auto* prog = app.add_subcommand("program", "print the generated kernel program");
    KernelFlags p_flags;
    std::size_t p_m = 0, p_n = 0, p_p = 0;
    std::string p_out = "-";
    p_flags.add(prog);
    prog->add_option("--M", p_m);
    prog->add_option("--N", p_n);
    prog->add_option("--P", p_p);
    prog->add_option("-o,--out", p_out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : config_error;
    }

    int rc = ok;
    try {
        const SynthParams sp{mu, sigma, seed};
        if (*synth) {
            rc = cmd_synth(rows, cols, sp, synth_fmt, synth_out);
            manifest = {{"command", "synth"}, {"outputs", {synth_out}}, {"seed", seed}};
        } else if (*quant) {
            rc = cmd_quantize(q_in, q_out, q_fmt, q_k, q_axis, q_transpose, q_json);
            manifest = {{"command", "quantize"}, {"inputs", {q_in}}, {"outputs", {q_out}}};
        } else if (*mm) {
            rc = cmd_matmul(mm_a, mm_b, mm_flags, mm_check, mm_report, mm_csv, mm_out, mm_costs, mm_trace);
            manifest = {{"command", "matmul"}, {"inputs", {mm_a, mm_b}}, {"config", mm_flags.config_path}};
        } else if (*bench) {
            if (!b_kernels.empty()) spec.kernels = split_list(b_kernels);
            if (!b_formats.empty()) spec.formats = split_list(b_formats);
            if (!b_accs.empty()) spec.accs = split_list(b_accs);
            spec.synth = sp;
            rc = cmd_bench(spec, b_flags, b_sweep, b_format, b_out, b_check, b_costs);
            manifest = {{"command", "bench"}, {"config", b_sweep}, {"seed", seed}};
        } else if (*ver) {
            rc = cmd_verify(vopts, v_out);
            manifest = {{"command", "verify"}, {"seed", vopts.seed}};
        } else if (*run) {
            rc = cmd_run(r_prog, r_vlen, r_flen, r_mem, r_out, r_trace);
            manifest = {{"command", "run"}, {"inputs", {r_prog}}};
        } else if (*prog) {
            rc = cmd_program(p_flags, p_m, p_n, p_p, p_out);
            manifest = {{"command", "program"}};
        }
        if (!manifest_path.empty()) {
            json argv_list = json::array();
            for (int i = 0; i < argc; ++i) argv_list.push_back(argv[i]);
            manifest["argv"] = argv_list;
            manifest["exit_code"] = rc;
            write_file(manifest_path, manifest.dump(2) + "\n");
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error (%s): %s\n", to_string(e.code()), e.what());
        return exit_for(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return config_error;
    }
    return rc;
}
