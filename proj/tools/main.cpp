#include <torus_spectra/dimred.hpp>
#include <torus_spectra/io.hpp>
#include <torus_spectra/normalform.hpp>
#include <torus_spectra/partition.hpp>
#include <torus_spectra/spectra.hpp>

#include "CLI11.hpp"

#include <filesystem>
#include <iostream>
#include <optional>
#include <random>

namespace fs = std::filesystem;
using namespace torus_spectra;

namespace {

struct Overrides {
    std::string config;
    std::optional<double> radius;
    std::optional<int> steps;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    bool plot = false;
    bool verify_only = false;
};

std::string xi_string(const IntVec& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + std::to_string(v[i]);
    return s;
}

std::string class_string(const ClassKey& k) {
    std::string s = "M=";
    for (std::size_t i = 0; i < k.M.basis().size(); ++i) s += (i ? "|" : "") + xi_string(k.M.basis()[i]);
    if (k.M.rank() == 0) s += "0";
    return s + " beta=" + xi_string(k.beta);
}

// Lazily evaluated pipeline stages on one box.
template <class Scalar>
class Pipeline {
public:
    Pipeline(RunConfig cfg, std::string hash)
        : cfg_(std::move(cfg)), hash_(std::move(hash)), L_(cfg_.lattice()), V_(cfg_.potential()),
          box_(std::make_shared<const IndexSet>(ball(L_, cfg_.radius))) {}

    const EscalatedPartition& partition() {
        if (!part_) part_ = partition_with_escalation(L_, *box_, cfg_.params);
        return *part_;
    }
    const NormalFormOutput<Scalar>& normal_form_output() {
        if (!nf_) nf_ = normal_form<Scalar>(L_, V_, box_, partition().partition.params, cfg_.steps);
        return *nf_;
    }
    const Mat<Scalar>& hamiltonian() {
        if (!H_) {
            Mat<Scalar> H = weyl_matrix<Scalar>(L_, V_, box_).mat;
            for (std::size_t i = 0; i < box_->size(); ++i) H(i, i) += Scalar(L_.free_eigenvalue((*box_)[i]));
            H_ = std::move(H);
        }
        return *H_;
    }
    const Eigenpairs<Scalar>& eigen() {
        if (!eig_) eig_ = eigensolve<Scalar>(hamiltonian());
        return *eig_;
    }
    const LabeledSpectrum& labels() {
        if (!lab_) lab_ = label_eigenvalues(eigen().values, normal_form_output(), partition().partition);
        return *lab_;
    }

    json meta(const std::string& kind) const { return artifact_meta(hash_, kind); }
    std::string path(const std::string& name) const { return (fs::path(cfg_.output_dir) / name).string(); }

    void lattice_info() {
        json j = meta("lattice");
        j["lattice"] = to_json(L_);
        j["box_points"] = box_->size();
        write_json(path("lattice.json"), j);
    }

    void partition_cmd(bool plot) {
        const auto& ep = partition();
        const auto& P = ep.partition;
        json j = meta("partition");
        j["points"] = P.points.size();
        j["escalations"] = P.escalations;
        j["params"] = {{"C", P.params.C}, {"D", P.params.D}};
        json levels = json::array();
        for (int s = 0; s <= L_.d; ++s) levels.push_back(P.count_level(s));
        j["level_counts"] = levels;
        j["all_certain"] = P.all_certain();
        j["top_block_radius"] = P.top_block_radius();
        json classes = json::array();
        std::map<ClassKey, int> ids;
        for (const auto& [key, idx] : P.classes()) {
            ids.emplace(key, static_cast<int>(ids.size()));
            if (key.M.rank() == 0) continue;
            classes.push_back({{"id", ids[key]},
                               {"module", to_json(key.M)},
                               {"beta", key.beta},
                               {"level", P.labels[idx.front()].level},
                               {"size", idx.size()}});
        }
        j["nontrivial_classes"] = classes;
        j["geometry"] = to_json(ep.report);
        write_json(path("partition.json"), j);
        if (plot) {
            json pts = json::array();
            for (std::size_t i = 0; i < P.points.size(); ++i) {
                const ClassKey key{P.labels[i].M, P.labels[i].beta};
                pts.push_back({{"xi", P.points[i]}, {"class", ids.at(key)}, {"level", P.labels[i].level}});
            }
            json p = meta("plot");
            p["points"] = pts;
            write_json(path("plot.json"), p);
        }
    }

    void normal_form_cmd() {
        const auto& nf = normal_form_output();
        json j = meta("normal_form");
        j["steps"] = nf.steps;
        j["margin"] = nf.margin;
        j["interior_points"] = nf.interior.size();
        j["policy"] = nf.policy == SplitPolicy::Sharp ? "sharp" : "smooth";
        json steps = json::array();
        for (const auto& d : nf.diagnostics)
            steps.push_back({{"step", d.step},
                             {"max_interior_row_norm", d.max_interior_row_norm},
                             {"unitarity_error", d.unitarity_error},
                             {"generator_max", d.generator_norm}});
        j["diagnostics"] = steps;
        const long n = static_cast<long>(box_->size());
        j["unitarity_error"] = (nf.U.adjoint() * nf.U - Mat<Scalar>::Identity(n, n)).cwiseAbs().maxCoeff();
        write_json(path("nf.json"), j);
        std::vector<std::vector<std::string>> rows;
        for (const auto& d : nf.diagnostics)
            for (std::size_t a = 0; a < nf.interior.size(); ++a) {
                const IntVec& xi = (*box_)[nf.interior[a]];
                rows.push_back({xi_string(xi), fmt_double(std::sqrt(L_.free_eigenvalue(xi))),
                                fmt_double(d.interior_row_norms[a]), std::to_string(d.step)});
            }
        write_csv(path("nf_decay.csv"), hash_, {"xi", "xi_norm", "row_norm", "step"}, rows);
    }

    void spectrum_cmd() {
        const auto& S = labels();
        const auto& E = eigen();
        const double s_neg = -static_cast<double>(std::max(cfg_.steps, 1));
        std::vector<std::vector<std::string>> rows;
        for (const auto& e : S.entries) {
            const double hn = neg_sobolev_norm(L_, *box_, E.vectors.col(e.eigen_index), s_neg);
            rows.push_back({xi_string(e.xi), fmt_double(e.lambda), class_string(e.label), fmt_double(e.residual),
                            fmt_double(e.prediction), std::to_string(e.eigen_index), e.interior ? "1" : "0",
                            e.ambiguous ? "1" : "0", fmt_double(hn)});
        }
        write_csv(path("spectrum.csv"), hash_,
                  {"xi", "lambda", "block", "residual", "prediction", "eigen_index", "interior", "ambiguous",
                   "h_neg_norm"},
                  rows);
    }

    void verify_cmd() {
        json checks = json::array();
        bool all = true;
        auto check = [&](const std::string& name, double value, double tol, bool pass, json extra = json::object()) {
            json c{{"name", name}, {"value", value}, {"tolerance", tol}, {"pass", pass}};
            c.update(extra);
            checks.push_back(c);
            all = all && pass;
        };
        const auto& ep = partition();
        check("geometry_violations",
              double(ep.report.nesting_violations + ep.report.separation_violations + ep.report.overlap_violations), 0,
              ep.report.clean(), {{"escalations", ep.partition.escalations}});
        const auto& nf = normal_form_output();
        const auto bi = verify_block_invariance(nf, ep.partition);
        check("block_invariance_max", bi.max_violation, 0, bi.max_violation == 0.0);
        const long n = static_cast<long>(box_->size());
        const double unit = (nf.U.adjoint() * nf.U - Mat<Scalar>::Identity(n, n)).cwiseAbs().maxCoeff();
        check("unitarity", unit, 1e-10, unit <= 1e-10);
        Mat<Scalar> conj = nf.N_op.mat + nf.R_op.mat;
        for (long i = 0; i < n; ++i) conj(i, i) += Scalar(nf.lambda0[i]);
        const auto ce = eigensolve<Scalar>(conj, false).values;
        const auto& he = eigen().values;
        const double scale = std::max(1.0, he.cwiseAbs().maxCoeff());
        const double spec = (ce - he).cwiseAbs().maxCoeff() / scale;
        check("spectral_conservation", spec, 1e-10, spec <= 1e-10);
        check("labeling_bijective", labels().bijective ? 0 : 1, 0, labels().bijective,
              {{"ambiguous", labels().ambiguous}});

        double supV = 0;
        for (const auto& [k, c] : V_.terms()) supV += std::abs(*c.constant);
        const std::vector<double> ev(he.data(), he.data() + he.size());
        for (double R : {cfg_.radius / 4, cfg_.radius / 2, cfg_.radius}) {
            const auto w = weyl_count_check(ev, L_, R, supV);
            check("weyl_R" + fmt_double(R), double(w.count), w.bound, w.holds(), {{"hypothesis", w.hypothesis}});
        }
        const double Lw = std::max(supV, 0.5);
        try {
            const auto cd = find_clusters(ev, Lw, 1.0);
            const auto inv = check_clusters(cd, cluster_count_constant(L_), L_.d);
            check("cluster_invariants",
                  double(inv.width_violations + inv.gap_violations + inv.count_violations), 0, inv.ok(),
                  {{"clusters", cd.clusters.size()}, {"L", Lw}});
        } catch (const WindowExhausted& e) {
            checks.push_back({{"name", "cluster_invariants"}, {"window_exhausted", e.what()}, {"pass", true}});
        }

        std::mt19937_64 rng(cfg_.seed);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        int held = 0, bad = 0;
        for (int trial = 0; trial < 200; ++trial) {
            const int m = 20;
            std::vector<double> dg;
            double x = 0;
            for (int i = 0; i < m; ++i) dg.push_back(x += (u(rng) < 0.25) ? 2.0 + 6.0 * u(rng) : 0.05 * u(rng));
            Mat<double> H0 = Eigen::Map<Eigen::VectorXd>(dg.data(), m).asDiagonal();
            Mat<double> G = Mat<double>::NullaryExpr(m, m, [&]() { return u(rng) - 0.5; });
            const Mat<double> H1 = std::pow(10.0, -1.0 - 4.0 * u(rng)) * (G + G.transpose());
            const std::size_t first = static_cast<std::size_t>(u(rng) * m);
            std::size_t last = first;
            while (last + 1 < std::size_t(m) && dg[last + 1] - dg[last] < 1.0) ++last;
            const auto q = quasimode_match<double>(eigensolve<double>(H0), H1, first, last, 0.25 + 0.7 * u(rng), &H0);
            held += q.hypothesis;
            bad += q.hypothesis && !q.conclusion;
        }
        check("quasimode_counterexamples", bad, 0, bad == 0, {{"trials", 200}, {"hypothesis_held", held}});

        double red = 0;
        std::size_t blocks = 0;
        const Mat<Scalar> Ht = nf.normal_form_hamiltonian();
        for (const auto& [key, idx] : ep.partition.classes()) {
            if (key.M.rank() == 0 || key.M.rank() == L_.d) continue;
            const auto r = reduce_block(nf, ep.partition, key);
            Mat<Scalar> B(r.op.size(), r.op.size());
            for (std::size_t b = 0; b < r.op.size(); ++b)
                for (std::size_t a = 0; a < r.op.size(); ++a) B(a, b) = Ht(r.parent_indices[a], r.parent_indices[b]);
            const auto pe = eigensolve<Scalar>(B, false).values, re = eigensolve<Scalar>(r.op.mat, false).values;
            for (Eigen::Index a = 0; a < pe.size(); ++a)
                red = std::max(red, std::abs(pe[a] - re[a] - r.ell2) / std::max(1.0, std::abs(pe[a])));
            ++blocks;
        }
        check("reduction_exactness", red, 1e-10, red <= 1e-10, {{"blocks", blocks}});

        json j = meta("verify");
        j["checks"] = checks;
        j["passed"] = all;
        write_json(path("verify.json"), j);
    }

    void reduction_cmd() {
        ReductionOptions opt;
        opt.steps = cfg_.steps;
        json j = meta("reduction");
        j["tree"] = to_json(iterate_reduction<Scalar>(L_, V_, box_, cfg_.params, opt));
        write_json(path("reduction.json"), j);
    }

private:
    RunConfig cfg_;
    std::string hash_;
    Lattice L_;
    FourierSymbol V_;
    std::shared_ptr<const IndexSet> box_;
    std::optional<EscalatedPartition> part_;
    std::optional<NormalFormOutput<Scalar>> nf_;
    std::optional<Mat<Scalar>> H_;
    std::optional<Eigenpairs<Scalar>> eig_;
    std::optional<LabeledSpectrum> lab_;
};

template <class Scalar>
void execute(const RunConfig& cfg, const std::string& hash, const std::vector<std::string>& commands, bool plot) {
    Pipeline<Scalar> p(cfg, hash);
    for (const auto& c : commands) {
        if (c == "lattice-info") p.lattice_info();
        else if (c == "partition") p.partition_cmd(plot);
        else if (c == "normal-form") p.normal_form_cmd();
        else if (c == "spectrum") p.spectrum_cmd();
        else if (c == "verify") p.verify_cmd();
        else if (c == "reduction") p.reduction_cmd();
    }
}

int dispatch(const std::string& sub, const Overrides& o) {
    RunConfig cfg = load_config(o.config);
    if (o.radius) cfg.radius = *o.radius;
    if (o.steps) cfg.steps = *o.steps;
    if (o.seed) cfg.seed = *o.seed;
    if (o.out) cfg.output_dir = *o.out;
    if (!(cfg.radius > 0)) detail::config_fail("radius", "must be positive");
    if (cfg.steps < 0) detail::config_fail("steps", "must be nonnegative");
    const std::string hash = config_hash(effective_config(cfg));
    std::vector<std::string> commands;
    if (sub == "run") {
        commands = o.verify_only ? std::vector<std::string>{"verify"} : cfg.commands;
    } else if (sub == "spectrum") {
        commands = {"spectrum", "reduction"};
    } else {
        commands = {o.verify_only ? std::string("verify") : sub};
    }
    fs::create_directories(cfg.output_dir);
    if (cfg.potential(false).real_matrix())
        execute<double>(cfg, hash, commands, o.plot);
    else
        execute<cplx>(cfg, hash, commands, o.plot);
    std::cout << json{{"status", "ok"}, {"config_hash", hash}, {"output_dir", cfg.output_dir}, {"commands", commands}}.dump()
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spectra of Schroedinger operators on flat tori"};
    app.set_version_flag("--version", library_version());
    app.require_subcommand(1);
    Overrides o;
    const std::vector<std::pair<std::string, std::string>> subs{
        {"lattice-info", "metric, dual metric and lattice constants"},
        {"partition", "resonant zones, blocks and invariant classes"},
        {"normal-form", "conjugate to normal form and report remainder decay"},
        {"spectrum", "labeled spectrum and reduction tree"},
        {"verify", "structural and numerical checks"},
        {"run", "the commands listed in the config"}};
    for (const auto& [name, help] : subs) {
        auto* s = app.add_subcommand(name, help);
        s->add_option("--config", o.config, "JSON run configuration")->required();
        s->add_option("--radius", o.radius, "box radius in the dual metric");
        s->add_option("--steps", o.steps, "normal-form steps");
        s->add_option("--seed", o.seed, "seed for randomized checks");
        s->add_option("--out", o.out, "output directory");
        s->add_flag("--emit-plot-data", o.plot, "also write plot.json with point classes");
        s->add_flag("--verify-only", o.verify_only, "only run the verification stage");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    const std::string sub = app.get_subcommands().front()->get_name();
    try {
        return dispatch(sub, o);
    } catch (const ConfigError& e) {
        std::cerr << json{{"status", "invalid_config"}, {"diagnostic", json::parse(e.what(), nullptr, false)}}.dump()
                  << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << json{{"status", "pipeline_error"}, {"error", e.what()}}.dump() << "\n";
        return 3;
    }
}
