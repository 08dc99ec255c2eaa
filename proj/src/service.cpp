#include "makeitso/service.hpp"

#include <httplib.h>

#include <cstdio>

namespace makeitso {

using nlohmann::json;

json invert_to_dir(const InvertInputs& in, const std::filesystem::path& dir, const ProgressFn& progress) {
    const auto extractor = FeatureExtractor<float>::random_pyramid(in.generator.arch->resolution());
    const auto result = make_it_so<float>(in.generator, in.target, in.bank, in.config, extractor, progress);
    return save_result(result, in.target, extractor, in.description, dir);
}

Image<float> render_edit(const StoredResult& result, const EditDirection<float>* direction, double strength) {
    StyleStack<float> styles = latent_to_styles<float>(result.tuned, result.latent, nullptr);
    if (direction) styles = apply_edit(styles, *direction, strength);
    return synthesize(result.tuned, styles);
}

std::string to_string(JobState state) {
    switch (state) {
        case JobState::Queued: return "queued";
        case JobState::Running: return "running";
        case JobState::Done: return "done";
        case JobState::Failed: return "failed";
    }
    return "?";
}

namespace {

JobState parse_state(const std::string& s) {
    if (s == "queued") return JobState::Queued;
    if (s == "running") return JobState::Running;
    if (s == "done") return JobState::Done;
    return JobState::Failed;
}

}  // namespace

json JobRecord::to_json() const {
    json j = {{"id", id},
              {"kind", kind},
              {"state", to_string(state)},
              {"progress", {{"done", done}, {"total", total}}},
              {"config", config},
              {"bank", bank}};
    if (!error.empty()) j["error"] = error;
    if (state == JobState::Done)
        j["artifacts"] = {{"manifest", "manifest.json"},
                          {"latent", "z.json"},
                          {"tuned_checkpoint", "tuned.misockpt"},
                          {"anchored_checkpoint", "anchored.misockpt"},
                          {"loss_csv", "loss.csv"},
                          {"reconstruction_png", "reconstruction.png"},
                          {"target_png", "target.png"}};
    return j;
}

// --------------------------------------------------------------- service

JobService::JobService(Options options)
    : options_(std::move(options)),
      extractor_(FeatureExtractor<float>::random_pyramid(options_.generator.arch->resolution())) {
    require(options_.queue_depth >= 1, "queue depth must be >= 1");
    for (const auto& b : options_.banks)
        if (!b.bank.empty()) require_same_architecture(b.bank.arch_hash(), options_.generator.hash());
    const auto jobs_dir = options_.data_root / "jobs";
    std::filesystem::create_directories(jobs_dir);
    for (const auto& entry : std::filesystem::directory_iterator(jobs_dir)) {
        const auto file = entry.path() / "job.json";
        if (!std::filesystem::exists(file)) continue;
        try {
            const json j = json::parse(read_file(file));
            JobRecord r;
            r.id = j.at("id").get<std::string>();
            r.kind = j.value("kind", "invert");
            r.state = parse_state(j.at("state").get<std::string>());
            r.done = j.at("progress").at("done").get<int>();
            r.total = j.at("progress").at("total").get<int>();
            r.config = j.value("config", json::object());
            r.bank = j.value("bank", "");
            r.error = j.value("error", "");
            r.dir = entry.path();
            if (r.state == JobState::Queued || r.state == JobState::Running) {
                r.state = JobState::Failed;
                r.error = "interrupted by a service restart";
                persist(r);
            }
            if (r.id.size() > 1) next_id_ = std::max<std::uint64_t>(next_id_, std::stoull(r.id.substr(1)) + 1);
            jobs_[r.id] = std::move(r);
        } catch (const std::exception&) {
            // Unreadable records are skipped, not fatal.
        }
    }
    worker_ = std::thread([this] { worker_loop(); });
}

JobService::~JobService() {
    {
        std::lock_guard lock(mutex_);
        stopping_ = true;
    }
    changed_.notify_all();
    if (worker_.joinable()) worker_.join();
}

void JobService::persist(const JobRecord& record) const {
    const auto tmp = record.dir / "job.json.tmp";
    write_file(tmp, record.to_json().dump(2) + "\n");
    std::filesystem::rename(tmp, record.dir / "job.json");
}

const NamedBank& JobService::bank_by_name(const std::string& name) const {
    for (const auto& b : options_.banks)
        if (b.name == name) return b;
    std::string known;
    for (const auto& b : options_.banks) known += (known.empty() ? "" : ", ") + b.name;
    throw ConfigError("unknown bank '" + name + "' (available: " + (known.empty() ? "none" : known) + ")");
}

JobRecord JobService::submit(const std::string& image_bytes, const json& config_json, const std::string& bank_name) {
    const InversionConfig config = config_with_overrides(config_json);
    std::string bank = bank_name;
    if (bank.empty() && !options_.banks.empty()) bank = options_.banks.front().name;
    if (!bank.empty()) bank_by_name(bank);
    const RgbImage rgb = decode_image(image_bytes);
    const Image<float> target = ingest_target(rgb, options_.generator.arch->resolution());

    std::unique_lock lock(mutex_);
    if (queue_.size() >= options_.queue_depth) throw QueueFull("job queue is full");
    char id[32];
    std::snprintf(id, sizeof id, "j%06llu", static_cast<unsigned long long>(next_id_++));
    JobRecord r;
    r.id = id;
    r.config = config_to_json(config);
    r.total = config.total_iters;
    r.bank = bank;
    r.dir = options_.data_root / "jobs" / r.id;
    std::filesystem::create_directories(r.dir);
    write_png(target, r.dir / "target.png");
    write_file(r.dir / "upload.json",
               json{{"original_height", rgb.height}, {"original_width", rgb.width}}.dump() + "\n");
    persist(r);
    jobs_[r.id] = r;
    queue_.push_back(r.id);
    lock.unlock();
    changed_.notify_all();
    return r;
}

void JobService::worker_loop() {
    for (;;) {
        std::string id;
        JobRecord snapshot;
        {
            std::unique_lock lock(mutex_);
            changed_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
            if (stopping_) return;
            id = queue_.front();
            queue_.pop_front();
            auto& r = jobs_.at(id);
            r.state = JobState::Running;
            persist(r);
            snapshot = r;
        }
        changed_.notify_all();
        try {
            InvertInputs in{options_.generator, EditBank<float>(options_.generator.hash()), {}, {}, {}};
            if (!snapshot.bank.empty()) {
                const auto& nb = bank_by_name(snapshot.bank);
                in.bank = nb.bank;
                in.description.bank = nb.path.empty() ? nb.name : nb.path.string();
            }
            in.config = config_from_json(snapshot.config);
            const json upload = json::parse(read_file(snapshot.dir / "upload.json"));
            in.target = ingest_target(read_image(snapshot.dir / "target.png"), options_.generator.arch->resolution());
            in.description.checkpoint = options_.checkpoint_label;
            in.description.target = "upload";
            in.description.target_height = upload.value("original_height", 0);
            in.description.target_width = upload.value("original_width", 0);
            invert_to_dir(in, snapshot.dir, [&](int done, int total) {
                {
                    std::lock_guard lock(mutex_);
                    auto& r = jobs_.at(id);
                    r.done = std::max(r.done, done);
                    r.total = total;
                }
                changed_.notify_all();
            });
            std::lock_guard lock(mutex_);
            auto& r = jobs_.at(id);
            r.state = JobState::Done;
            r.done = r.total;
            persist(r);
        } catch (const std::exception& e) {
            std::lock_guard lock(mutex_);
            auto& r = jobs_.at(id);
            r.state = JobState::Failed;
            r.error = e.what();
            try {
                persist(r);
            } catch (const std::exception&) {
            }
        }
        changed_.notify_all();
    }
}

JobRecord JobService::get(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) throw UnknownJob("unknown job '" + id + "'");
    return it->second;
}

std::vector<JobRecord> JobService::list() const {
    std::lock_guard lock(mutex_);
    std::vector<JobRecord> out;
    for (const auto& [id, r] : jobs_) out.push_back(r);
    return out;
}

JobRecord JobService::wait(const std::string& id, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mutex_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) throw UnknownJob("unknown job '" + id + "'");
    changed_.wait_for(lock, timeout, [&] {
        const auto s = jobs_.at(id).state;
        return s == JobState::Done || s == JobState::Failed;
    });
    return jobs_.at(id);
}

JobRecord JobService::finished(const std::string& id) const {
    JobRecord r = get(id);
    if (r.state != JobState::Done) throw JobNotReady("job '" + id + "' is " + to_string(r.state), r.state);
    return r;
}

std::shared_ptr<const StoredResult> JobService::stored(const JobRecord& record) const {
    {
        std::lock_guard lock(mutex_);
        auto it = cache_.find(record.id);
        if (it != cache_.end()) return it->second;
    }
    auto loaded = std::make_shared<const StoredResult>(load_result(record.dir));
    std::lock_guard lock(mutex_);
    return cache_.emplace(record.id, std::move(loaded)).first->second;
}

std::string JobService::image(const std::string& id, const std::string& kind) const {
    if (kind == "target") return read_file(get(id).dir / "target.png");
    if (kind == "reconstruction") return read_file(finished(id).dir / "reconstruction.png");
    throw ConfigError("unknown image kind '" + kind + "' (expected target or reconstruction)");
}

json JobService::manifest(const std::string& id) const {
    return json::parse(read_file(finished(id).dir / "manifest.json"));
}

std::string JobService::edit(const std::string& id, const std::string& direction, double strength) const {
    const JobRecord r = finished(id);
    if (!std::isfinite(strength)) throw ConfigError("strength must be finite");
    const auto result = stored(r);
    const EditDirection<float>* dir = nullptr;
    if (!direction.empty()) {
        if (r.bank.empty()) throw ConfigError("job has no edit bank");
        const auto& bank = bank_by_name(r.bank).bank;
        dir = bank.find(direction);
        if (!dir) {
            std::string names;
            for (const auto& n : bank.names()) names += (names.empty() ? "" : ", ") + n;
            throw ConfigError("unknown direction '" + direction + "' (available: " + names + ")");
        }
    }
    return encode_png(render_edit(*result, dir, strength));
}

// ------------------------------------------------------------------ HTTP

namespace {

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message,
                const std::string& field = {}) {
    json e = {{"code", code}, {"message", message}};
    if (!field.empty()) e["field"] = field;
    res.status = status;
    res.set_content(json{{"error", e}}.dump(), "application/json");
}

void send_json(httplib::Response& res, const json& j, int status = 200) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
}

// Maps engine exceptions to HTTP statuses.
template <typename F>
void guarded(httplib::Response& res, const JobService& service, const std::string& id, F&& body) {
    try {
        body();
    } catch (const UnknownJob& e) {
        send_error(res, 404, "not_found", e.what());
    } catch (const JobNotReady& e) {
        if (e.state() == JobState::Failed) {
            std::string detail;
            try {
                detail = service.get(id).error;
            } catch (const std::exception&) {
            }
            send_error(res, 500, "job_failed", detail.empty() ? e.what() : detail);
        } else {
            send_error(res, 409, "not_finished", e.what());
        }
    } catch (const FormatError& e) {
        send_error(res, 400, "bad_request", e.what(), e.field());
    } catch (const ConfigError& e) {
        send_error(res, 400, "bad_request", e.what());
    } catch (const ContractViolation& e) {
        send_error(res, 400, "bad_request", e.what());
    } catch (const QueueFull& e) {
        send_error(res, 503, "queue_full", e.what());
    } catch (const std::exception& e) {
        send_error(res, 500, "internal", e.what());
    }
}

}  // namespace

void install_routes(httplib::Server& server, JobService& service) {
    server.Get("/api/version", [&](const httplib::Request&, httplib::Response& res) {
        send_json(res, {{"api_version", kApiVersion},
                        {"report_schema_version", 1},
                        {"manifest_version", kManifestVersion},
                        {"arch_hash", service.generator().hash()},
                        {"resolution", service.generator().arch->resolution()}});
    });

    server.Post("/api/jobs", [&](const httplib::Request& req, httplib::Response& res) {
        guarded(res, service, "", [&] {
            if (!req.is_multipart_form_data())
                return send_error(res, 400, "bad_request", "expected multipart/form-data with an 'image' file", "image");
            if (!req.has_file("image")) return send_error(res, 400, "bad_request", "missing 'image' file", "image");
            json config = json::object();
            if (req.has_file("config")) {
                try {
                    config = json::parse(req.get_file_value("config").content);
                } catch (const json::exception& e) {
                    return send_error(res, 400, "bad_request", std::string("config is not JSON: ") + e.what(),
                                      "config");
                }
                if (!config.is_object()) return send_error(res, 400, "bad_request", "config must be an object", "config");
            }
            const std::string bank = req.has_file("bank") ? req.get_file_value("bank").content : std::string();
            const JobRecord r = service.submit(req.get_file_value("image").content, config, bank);
            send_json(res, r.to_json(), 202);
        });
    });

    server.Get("/api/jobs", [&](const httplib::Request&, httplib::Response& res) {
        json jobs = json::array();
        for (const auto& r : service.list()) jobs.push_back(r.to_json());
        send_json(res, {{"jobs", jobs}});
    });

    server.Get(R"(/api/jobs/([^/]+))", [&](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        guarded(res, service, id, [&] { send_json(res, service.get(id).to_json()); });
    });

    server.Get(R"(/api/jobs/([^/]+)/image)", [&](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        guarded(res, service, id, [&] {
            const std::string kind = req.has_param("kind") ? req.get_param_value("kind") : "reconstruction";
            if (kind != "target" && kind != "reconstruction")
                return send_error(res, 400, "bad_request", "kind must be target or reconstruction", "kind");
            res.set_content(service.image(id, kind), "image/png");
        });
    });

    server.Get("/api/banks", [&](const httplib::Request&, httplib::Response& res) {
        json banks = json::array();
        for (const auto& b : service.banks()) {
            json dirs = json::array();
            for (const auto& d : b.bank.directions())
                dirs.push_back({{"name", d.name},
                                {"default_strength", d.default_strength},
                                {"strength_range", {d.strength_range[0], d.strength_range[1]}}});
            banks.push_back({{"name", b.name}, {"arch_hash", b.bank.arch_hash()}, {"directions", dirs}});
        }
        send_json(res, {{"banks", banks}});
    });

    server.Post(R"(/api/results/([^/]+)/edit)", [&](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        guarded(res, service, id, [&] {
            json body;
            try {
                body = json::parse(req.body);
            } catch (const json::exception&) {
                return send_error(res, 400, "bad_request", "body must be JSON {direction, strength}");
            }
            if (!body.is_object()) return send_error(res, 400, "bad_request", "body must be an object");
            if (body.contains("direction") && !body["direction"].is_string())
                return send_error(res, 400, "bad_request", "direction must be a string", "direction");
            if (body.contains("strength") && !body["strength"].is_number())
                return send_error(res, 400, "bad_request", "strength must be a number", "strength");
            const std::string direction = body.value("direction", std::string());
            const double strength = body.value("strength", 0.0);
            service.get(id);  // 404 before validating the direction
            res.set_content(service.edit(id, direction, strength), "image/png");
        });
    });

    server.Get(R"(/api/results/([^/]+)/manifest)", [&](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        guarded(res, service, id, [&] { send_json(res, service.manifest(id)); });
    });
}

}  // namespace makeitso
