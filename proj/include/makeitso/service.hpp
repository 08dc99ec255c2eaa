#pragma once

// Inversion jobs shared by the CLI and the HTTP API. Both paths go through
// invert_to_dir, so equal inputs produce identical artifacts.

#include "makeitso/image_io.hpp"
#include "makeitso/results.hpp"

#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <thread>

namespace httplib {
class Server;
}

namespace makeitso {

inline constexpr int kApiVersion = 1;

struct InvertInputs {
    GeneratorParams<float> generator;
    EditBank<float> bank;
    Image<float> target;
    InversionConfig config;
    RunInputs description;
};

// Runs Make It So and writes the result directory. Returns the manifest.
nlohmann::json invert_to_dir(const InvertInputs& inputs, const std::filesystem::path& dir,
                             const ProgressFn& progress = {});

// Styles of a stored result, edited by `strength` along `direction`, rendered by its tuned model.
Image<float> render_edit(const StoredResult& result, const EditDirection<float>* direction, double strength);

enum class JobState { Queued, Running, Done, Failed };
std::string to_string(JobState state);

struct JobRecord {
    std::string id;
    std::string kind = "invert";
    JobState state = JobState::Queued;
    int done = 0;
    int total = 0;
    nlohmann::json config;
    std::string bank;
    std::string error;
    std::filesystem::path dir;

    nlohmann::json to_json() const;
};

class QueueFull : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UnknownJob : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// The job is not in a state that allows the request (e.g. edit before done).
class JobNotReady : public std::runtime_error {
public:
    JobNotReady(const std::string& what, JobState state) : std::runtime_error(what), state_(state) {}
    JobState state() const { return state_; }

private:
    JobState state_;
};

struct NamedBank {
    std::string name;
    std::filesystem::path path;  // empty for in-memory banks
    EditBank<float> bank;
};

// Owns the job table and a single worker thread. Jobs persist under
// <data_root>/jobs/<id>/ and are reloaded on construction, so finished
// results keep serving edits after a restart.
class JobService {
public:
    struct Options {
        std::filesystem::path data_root;
        GeneratorParams<float> generator;
        std::string checkpoint_label;  // recorded in manifests
        std::vector<NamedBank> banks;
        std::size_t queue_depth = 16;
    };

    explicit JobService(Options options);
    ~JobService();
    JobService(const JobService&) = delete;
    JobService& operator=(const JobService&) = delete;

    // Decodes and resizes the image, writes target.png and queues the job.
    // Throws FormatError / ConfigError on bad input, QueueFull when saturated.
    JobRecord submit(const std::string& image_bytes, const nlohmann::json& config, const std::string& bank_name);

    JobRecord get(const std::string& id) const;
    std::vector<JobRecord> list() const;
    // Blocks until the job leaves queued/running or the timeout passes.
    JobRecord wait(const std::string& id, std::chrono::milliseconds timeout) const;

    // PNG bytes. Target is available once queued; reconstruction needs a finished job.
    std::string image(const std::string& id, const std::string& kind) const;
    nlohmann::json manifest(const std::string& id) const;
    std::string edit(const std::string& id, const std::string& direction, double strength) const;

    const std::vector<NamedBank>& banks() const { return options_.banks; }
    const GeneratorParams<float>& generator() const { return options_.generator; }
    const std::filesystem::path& data_root() const { return options_.data_root; }

private:
    void worker_loop();
    void persist(const JobRecord& record) const;
    const NamedBank& bank_by_name(const std::string& name) const;
    JobRecord finished(const std::string& id) const;
    std::shared_ptr<const StoredResult> stored(const JobRecord& record) const;

    Options options_;
    FeatureExtractor<float> extractor_;
    mutable std::mutex mutex_;
    mutable std::condition_variable changed_;
    std::map<std::string, JobRecord> jobs_;
    std::deque<std::string> queue_;
    std::uint64_t next_id_ = 1;
    bool stopping_ = false;
    mutable std::map<std::string, std::shared_ptr<const StoredResult>> cache_;
    std::thread worker_;
};

// Registers every /api route on `server`.
void install_routes(httplib::Server& server, JobService& service);

}  // namespace makeitso
