#include "smoothkit/harness.hpp"

#include <atomic>
#include <cmath>
#include <iostream>
#include <mutex>
#include <set>
#include <thread>

#include <json.hpp>

#include "smoothkit/errors.hpp"
#include "smoothkit/metrics.hpp"
#include "smoothkit/param_store.hpp"

namespace smoothkit::harness {

using nlohmann::json;

namespace {

// Reads one JSON object, recording which keys were consumed so that leftovers
// can be rejected as unknown.
class ObjectReader {
public:
    ObjectReader(const json& obj, std::string prefix) : obj_(obj), prefix_(std::move(prefix)) {
        if (!obj_.is_object()) throw ConfigError(prefix_.empty() ? "<root>" : prefix_, "must be a JSON object");
    }

    [[nodiscard]] std::string path(std::string_view key) const {
        return prefix_.empty() ? std::string(key) : prefix_ + "." + std::string(key);
    }

    const json* find(std::string_view key) {
        seen_.emplace(key);
        auto it = obj_.find(std::string(key));
        return it == obj_.end() ? nullptr : &*it;
    }

    void read(std::string_view key, double& out) {
        if (const auto* v = find(key)) {
            if (!v->is_number()) throw ConfigError(path(key), "expected a number");
            out = v->get<double>();
        }
    }

    template <typename Int>
        requires std::is_integral_v<Int>
    void read(std::string_view key, Int& out) {
        if (const auto* v = find(key)) {
            if (!v->is_number_integer()) throw ConfigError(path(key), "expected an integer");
            if constexpr (std::is_unsigned_v<Int>) {
                if (v->is_number_unsigned()) {
                    out = static_cast<Int>(v->get<std::uint64_t>());
                    return;
                }
                if (v->get<std::int64_t>() < 0) throw ConfigError(path(key), "must be non-negative");
            }
            out = static_cast<Int>(v->get<std::int64_t>());
        }
    }

    void read(std::string_view key, bool& out) {
        if (const auto* v = find(key)) {
            if (!v->is_boolean()) throw ConfigError(path(key), "expected a boolean");
            out = v->get<bool>();
        }
    }

    void read(std::string_view key, std::string& out) {
        if (const auto* v = find(key)) {
            if (!v->is_string()) throw ConfigError(path(key), "expected a string");
            out = v->get<std::string>();
        }
    }

    template <typename T>
    void read_list(std::string_view key, std::vector<T>& out) {
        if (const auto* v = find(key)) {
            if (!v->is_array()) throw ConfigError(path(key), "expected an array");
            out.clear();
            for (const auto& e : *v) {
                if constexpr (std::is_integral_v<T>) {
                    if (!e.is_number_integer()) throw ConfigError(path(key), "expected integer entries");
                    if constexpr (std::is_unsigned_v<T>) {
                        if (!e.is_number_unsigned()) throw ConfigError(path(key), "entries must be non-negative");
                    }
                } else {
                    if (!e.is_number()) throw ConfigError(path(key), "expected numeric entries");
                }
                out.push_back(e.get<T>());
            }
        }
    }

    void finish() const {
        for (auto it = obj_.begin(); it != obj_.end(); ++it) {
            if (!seen_.contains(it.key())) throw ConfigError(path(it.key()), "unknown key");
        }
    }

private:
    const json& obj_;
    std::string prefix_;
    std::set<std::string, std::less<>> seen_;
};

void read_policy(ObjectReader& parent, std::string_view key, train::AugmentPolicy& policy, bool allow_drop) {
    const auto* v = parent.find(key);
    if (!v) return;
    ObjectReader r(*v, parent.path(key));
    r.read("sigma", policy.jitter_sigma);
    if (allow_drop) {
        r.read("drop_prob", policy.drop_prob);
    }
    r.finish();
}

bool filesystem_safe(const std::string& name) {
    if (name.empty() || name == "." || name == "..") return false;
    for (char c : name) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
                        c == '-' || c == '.';
        if (!ok) return false;
    }
    return true;
}

std::uint64_t parse_seed_text(const std::string& text, const char* field) {
    try {
        std::size_t pos = 0;
        if (text.empty() || text.front() == '-') throw std::invalid_argument("negative");
        const auto value = std::stoull(text, &pos, 10);
        if (pos != text.size()) throw std::invalid_argument("trailing characters");
        return value;
    } catch (const std::exception&) {
        throw ConfigError(field, "expected a non-negative integer, got '" + text + "'");
    }
}

json summary_json(const std::string& run_name, std::uint64_t seed, const RunRecord& rec,
                  const diag::SmoothingSummary* summary, const train::TrainRunConfig& cfg) {
    json j;
    j["run_name"] = run_name;
    j["seed"] = seed;
    j["task"] = std::string(train::to_string(cfg.task));
    j["method"] = std::string(to_string(cfg.smoothing.method));
    j["p"] = cfg.smoothing.p;
    j["m"] = cfg.smoothing.m;
    j["granularity"] = std::string(to_string(cfg.smoothing.granularity));
    j["status"] = rec.ok ? "ok" : "diverged";
    j["divergence_step"] = rec.divergence_step ? json(*rec.divergence_step) : json(nullptr);
    j["error"] = rec.error.empty() ? json(nullptr) : json(rec.error);
    j["report"] = summary ? json::parse(diag::summary_to_json(*summary)) : json(nullptr);
    return j;
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::nan("");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double mu = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - mu) * (x - mu);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

void ExperimentConfig::validate() const {
    run.validate();
    if (!filesystem_safe(run_name)) throw ConfigError("run_name", "must match [A-Za-z0-9._-]+");
    if (seeds.empty()) throw ConfigError("seeds", "must not be empty");
    if (sweep) {
        if (sweep->p.empty()) throw ConfigError("sweep.p", "must not be empty");
        if (sweep->m.empty()) throw ConfigError("sweep.m", "must not be empty");
        for (double p : sweep->p) {
            if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("sweep.p", "entries must lie in [0, 1]");
        }
        for (double m : sweep->m) {
            if (!(m >= 0.0 && m <= 1.0)) throw ConfigError("sweep.m", "entries must lie in [0, 1]");
        }
    }
}

ExperimentConfig parse_config(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
    }
    ObjectReader root(doc, "");
    std::string task_name;
    root.read("task", task_name);
    if (task_name.empty()) throw ConfigError("task", "is required");

    ExperimentConfig cfg;
    cfg.run = train::TrainRunConfig::defaults_for(train::parse_task(task_name));
    auto& run = cfg.run;

    std::string output_dir = cfg.output_dir.string();
    root.read("output_dir", output_dir);
    cfg.output_dir = output_dir;
    root.read("run_name", cfg.run_name);
    root.read("seed", run.seed);
    root.read_list("seeds", cfg.seeds);
    root.read("epochs", run.epochs);
    root.read("batch_labeled", run.batch_labeled);
    root.read("ratio", run.ratio);
    run.batch_unlabeled = run.ratio * run.batch_labeled;
    root.read("batch_unlabeled", run.batch_unlabeled);
    root.read("confidence_threshold", run.confidence_threshold);
    root.read("lambda_u", run.lambda_u);
    root.read("base_lr", run.base_lr);
    root.read("sgd_momentum", run.sgd_momentum);
    root.read("weight_decay", run.weight_decay);
    root.read("warmup_epochs", run.warmup_epochs);
    root.read("lr_schedule_epochs", run.lr_schedule_epochs);
    root.read("warmup_factor", run.warmup_factor);
    root.read("probe_size", run.probe_size);
    root.read_list("hidden_dims", run.hidden_dims);
    root.read("embedding_dim", run.embedding_dim);
    root.read("linear_probe_steps", run.linear_probe_steps);
    root.read("linear_probe_lr", run.linear_probe_lr);
    std::string source(train::to_string(run.pseudo_labels_from));
    root.read("pseudo_labels_from", source);
    run.pseudo_labels_from = train::parse_pseudo_label_source(source);

    if (const auto* s = root.find("smoothing")) {
        ObjectReader r(*s, "smoothing");
        std::string method(to_string(run.smoothing.method));
        std::string granularity(to_string(run.smoothing.granularity));
        r.read("method", method);
        r.read("granularity", granularity);
        r.read("p", run.smoothing.p);
        r.read("m", run.smoothing.m);
        r.read("seed", run.smoothing.seed);
        r.read("include_buffers", run.smoothing.include_buffers);
        r.finish();
        run.smoothing.method = parse_method(method);
        run.smoothing.granularity = parse_granularity(granularity);
    }
    if (const auto* d = root.find("dataset")) {
        ObjectReader r(*d, "dataset");
        std::string kind(train::to_string(run.dataset.kind));
        r.read("kind", kind);
        r.read("n", run.dataset.n);
        r.read("noise", run.dataset.noise);
        r.read("labeled_per_class", run.dataset.labeled_per_class);
        r.read("eval_fraction", run.dataset.eval_fraction);
        r.read("classes", run.dataset.classes);
        r.read("radius", run.dataset.radius);
        r.finish();
        run.dataset.kind = train::parse_dataset_kind(kind);
    }
    if (const auto* a = root.find("augment")) {
        ObjectReader r(*a, "augment");
        read_policy(r, "weak", run.weak, false);
        read_policy(r, "strong", run.strong, true);
        read_policy(r, "byol_view", run.byol_view, true);
        r.finish();
        run.byol_view.kind =
            run.byol_view.drop_prob > 0.0 ? train::AugmentPolicy::Kind::Strong : train::AugmentPolicy::Kind::Weak;
    }
    if (const auto* sw = root.find("sweep")) {
        ObjectReader r(*sw, "sweep");
        SweepAxes axes;
        if (!sw->contains("p")) throw ConfigError("sweep.p", "is required");
        if (!sw->contains("m")) throw ConfigError("sweep.m", "is required");
        r.read_list("p", axes.p);
        r.read_list("m", axes.m);
        r.finish();
        cfg.sweep = std::move(axes);
    }
    root.finish();

    if (cfg.seeds.empty()) cfg.seeds = {run.seed};
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) { return parse_config(read_file(path)); }

std::string config_to_json(const ExperimentConfig& cfg) {
    const auto& run = cfg.run;
    json j;
    j["task"] = std::string(train::to_string(run.task));
    j["output_dir"] = cfg.output_dir.string();
    j["run_name"] = cfg.run_name;
    j["seed"] = run.seed;
    j["seeds"] = cfg.seeds;
    j["epochs"] = run.epochs;
    j["batch_labeled"] = run.batch_labeled;
    j["ratio"] = run.ratio;
    j["batch_unlabeled"] = run.batch_unlabeled;
    j["confidence_threshold"] = run.confidence_threshold;
    j["lambda_u"] = run.lambda_u;
    j["base_lr"] = run.base_lr;
    j["sgd_momentum"] = run.sgd_momentum;
    j["weight_decay"] = run.weight_decay;
    j["warmup_epochs"] = run.warmup_epochs;
    j["lr_schedule_epochs"] = run.lr_schedule_epochs;
    j["warmup_factor"] = run.warmup_factor;
    j["probe_size"] = run.probe_size;
    j["hidden_dims"] = run.hidden_dims;
    j["embedding_dim"] = run.embedding_dim;
    j["linear_probe_steps"] = run.linear_probe_steps;
    j["linear_probe_lr"] = run.linear_probe_lr;
    j["pseudo_labels_from"] = std::string(train::to_string(run.pseudo_labels_from));
    j["smoothing"] = {
        {"method", std::string(to_string(run.smoothing.method))},
        {"p", run.smoothing.p},
        {"m", run.smoothing.m},
        {"granularity", std::string(to_string(run.smoothing.granularity))},
        {"seed", run.smoothing.seed},
        {"include_buffers", run.smoothing.include_buffers},
    };
    j["dataset"] = {
        {"kind", std::string(train::to_string(run.dataset.kind))},
        {"n", run.dataset.n},
        {"noise", run.dataset.noise},
        {"labeled_per_class", run.dataset.labeled_per_class},
        {"eval_fraction", run.dataset.eval_fraction},
        {"classes", run.dataset.classes},
        {"radius", run.dataset.radius},
    };
    j["augment"] = {
        {"weak", {{"sigma", run.weak.jitter_sigma}}},
        {"strong", {{"sigma", run.strong.jitter_sigma}, {"drop_prob", run.strong.drop_prob}}},
        {"byol_view", {{"sigma", run.byol_view.jitter_sigma}, {"drop_prob", run.byol_view.drop_prob}}},
    };
    if (cfg.sweep) j["sweep"] = {{"p", cfg.sweep->p}, {"m", cfg.sweep->m}};
    return j.dump(2) + "\n";
}

void apply_overrides(ExperimentConfig& cfg, const Overrides& o, const char* env_seed) {
    if (env_seed && *env_seed) {
        const auto seed = parse_seed_text(env_seed, "SMOOTHKIT_SEED");
        cfg.run.seed = seed;
        cfg.seeds = {seed};
    }
    if (o.seed) {
        cfg.run.seed = *o.seed;
        cfg.seeds = {*o.seed};
    }
    if (o.epochs) cfg.run.epochs = *o.epochs;
    if (o.p) cfg.run.smoothing.p = *o.p;
    if (o.m) cfg.run.smoothing.m = *o.m;
    if (o.method) cfg.run.smoothing.method = parse_method(*o.method);
    if (o.granularity) cfg.run.smoothing.granularity = parse_granularity(*o.granularity);
    if (o.out) cfg.output_dir = *o.out;
    cfg.validate();
}

RunRecord run_single(const train::TrainRunConfig& cfg, const std::filesystem::path& dir, const std::string& run_name) {
    RunRecord rec;
    rec.seed = cfg.seed;
    rec.dir = dir;
    try {
        const auto outcome = train::run_training(cfg);
        rec.ok = true;
        rec.final_teacher_accuracy = outcome.log.final_teacher_accuracy();
        rec.final_student_accuracy = outcome.log.final_student_accuracy();
        const auto summary = diag::smoothing_report(outcome.log);
        write_file_atomic(dir / "metrics.csv", metrics_to_csv(outcome.log));
        save_snapshot(outcome.final_teacher, dir / "teacher_final.json");
        write_file_atomic(dir / "summary.json", summary_json(run_name, cfg.seed, rec, &summary, cfg).dump(2) + "\n");
    } catch (const DivergenceError& e) {
        rec.ok = false;
        rec.divergence_step = e.step();
        rec.error = e.what();
        write_file_atomic(dir / "summary.json", summary_json(run_name, cfg.seed, rec, nullptr, cfg).dump(2) + "\n");
    }
    return rec;
}

std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    std::vector<RunRecord> records;
    for (auto seed : cfg.seeds) {
        auto run = cfg.run;
        run.seed = seed;
        records.push_back(run_single(run, cfg.output_dir / cfg.run_name / std::to_string(seed), cfg.run_name));
    }
    return records;
}

std::string cell_name(double p, double m) { return "p" + format_double(p) + "_m" + format_double(m); }

std::vector<SweepCell> run_sweep(const ExperimentConfig& cfg, unsigned jobs) {
    cfg.validate();
    if (!cfg.sweep) throw ConfigError("sweep", "config has no sweep axes");
    const auto root = cfg.output_dir / cfg.run_name;

    std::vector<SweepCell> cells;
    for (double p : cfg.sweep->p) {
        for (double m : cfg.sweep->m) {
            SweepCell cell;
            cell.p = p;
            cell.m = m;
            cell.runs.resize(cfg.seeds.size());
            cells.push_back(std::move(cell));
        }
    }

    struct Task {
        std::size_t cell;
        std::size_t seed_index;
    };
    std::vector<Task> tasks;
    for (std::size_t c = 0; c < cells.size(); ++c) {
        for (std::size_t s = 0; s < cfg.seeds.size(); ++s) tasks.push_back({c, s});
    }

    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    const auto worker = [&] {
        while (true) {
            const auto i = next.fetch_add(1);
            if (i >= tasks.size()) return;
            const auto [c, s] = tasks[i];
            auto run = cfg.run;
            run.seed = cfg.seeds[s];
            run.smoothing.method = Method::STS;
            run.smoothing.p = cells[c].p;
            run.smoothing.m = cells[c].m;
            try {
                cells[c].runs[s] = run_single(run, root / cell_name(cells[c].p, cells[c].m) / std::to_string(run.seed),
                                              cfg.run_name);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    const unsigned n_workers = std::max(1U, std::min<unsigned>(jobs, static_cast<unsigned>(tasks.size())));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    }
    if (first_error) std::rethrow_exception(first_error);

    for (auto& cell : cells) {
        std::vector<double> teacher, student;
        for (const auto& r : cell.runs) {
            if (!r.ok) {
                ++cell.diverged;
                continue;
            }
            if (r.final_teacher_accuracy) teacher.push_back(*r.final_teacher_accuracy);
            if (r.final_student_accuracy) student.push_back(*r.final_student_accuracy);
        }
        cell.mean_teacher_accuracy = mean_of(teacher);
        cell.std_teacher_accuracy = std_of(teacher);
        cell.mean_student_accuracy = mean_of(student);
        cell.std_student_accuracy = std_of(student);
    }
    write_file_atomic(root / "sweep.csv", sweep_to_csv(cells));
    return cells;
}

std::string sweep_to_csv(const std::vector<SweepCell>& cells) {
    std::string out =
        "p,m,runs,diverged,mean_teacher_accuracy,std_teacher_accuracy,mean_student_accuracy,std_student_accuracy\n";
    for (const auto& c : cells) {
        out += format_double(c.p) + "," + format_double(c.m) + "," + std::to_string(c.runs.size()) + "," +
               std::to_string(c.diverged) + "," + format_double(c.mean_teacher_accuracy) + "," +
               format_double(c.std_teacher_accuracy) + "," + format_double(c.mean_student_accuracy) + "," +
               format_double(c.std_student_accuracy) + "\n";
    }
    return out;
}

std::string report_run(const std::filesystem::path& run_dir, const std::optional<std::filesystem::path>& baseline_dir,
                       const diag::ReportWindow& window) {
    const auto log = metrics_from_csv(read_file(run_dir / "metrics.csv"));
    std::optional<MetricsLog> baseline;
    if (baseline_dir) baseline = metrics_from_csv(read_file(*baseline_dir / "metrics.csv"));
    const auto summary = diag::smoothing_report(log, baseline ? &*baseline : nullptr, window);
    return diag::summary_to_json(summary);
}

}  // namespace smoothkit::harness
