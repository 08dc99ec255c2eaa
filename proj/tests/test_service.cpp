#include "makeitso/harness.hpp"
#include "makeitso/service.hpp"

#include <doctest.h>
#include <httplib.h>

#include <chrono>
#include <filesystem>
#include <thread>

using namespace makeitso;
using nlohmann::json;

namespace {

std::filesystem::path fresh_root(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "makeitso_tests" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

JobService::Options micro_options(const std::filesystem::path& root, std::size_t depth = 16) {
    JobService::Options o;
    o.data_root = root;
    o.generator = init_toy_generator<float>(2, ArchConfig::micro());
    o.checkpoint_label = "toy-micro:2";
    o.banks.push_back({"demo", {}, make_random_bank<float>(*o.generator.arch, 3, 5, 1.0)});
    o.queue_depth = depth;
    return o;
}

// A 16x12 upload: exercises resize and center crop on the way in.
std::string upload_png() {
    Image<float> img(12, 16);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 12; ++y)
            for (int x = 0; x < 16; ++x) img.at(c, y, x) = static_cast<float>(((x / 4 + y / 4) % 2 ? 0.6 : -0.5) + 0.1 * c);
    return encode_png(img);
}

// Server on an ephemeral port, torn down with the fixture.
struct Api {
    JobService service;
    httplib::Server server;
    std::thread thread;
    int port = 0;

    explicit Api(JobService::Options options) : service(std::move(options)) {
        install_routes(server, service);
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~Api() {
        server.stop();
        thread.join();
    }

    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port);
        c.set_read_timeout(60, 0);
        return c;
    }

    httplib::Result submit(const std::string& image, const std::string& config, const std::string& bank = "") {
        httplib::MultipartFormDataItems items{{"image", image, "target.png", "image/png"}};
        if (!config.empty()) items.push_back({"config", config, "config.json", "application/json"});
        if (!bank.empty()) items.push_back({"bank", bank, "", "text/plain"});
        return client().Post("/api/jobs", items);
    }

    json poll_until_finished(const std::string& id) {
        auto c = client();
        int last = -1;
        for (int i = 0; i < 6000; ++i) {
            auto r = c.Get("/api/jobs/" + id);
            REQUIRE(r);
            REQUIRE(r->status == 200);
            const json j = json::parse(r->body);
            const int done = j["progress"]["done"].get<int>();
            CHECK(done >= last);  // progress never regresses
            last = done;
            const auto state = j["state"].get<std::string>();
            if (state == "done" || state == "failed") return j;
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
        FAIL("job did not finish");
        return {};
    }
};

json error_of(const httplib::Result& r) { return json::parse(r->body).at("error"); }

}  // namespace

TEST_CASE("http api round trip") {
    const auto root = fresh_root("api_round_trip");
    std::string id;
    std::string recon;
    {
        Api api(micro_options(root));
        auto c = api.client();

        auto version = c.Get("/api/version");
        REQUIRE(version);
        CHECK(version->status == 200);
        const json v = json::parse(version->body);
        CHECK(v["api_version"] == kApiVersion);
        CHECK(v["resolution"] == 8);
        CHECK(v["arch_hash"] == api.service.generator().hash());

        auto banks = c.Get("/api/banks");
        REQUIRE(banks);
        const json b = json::parse(banks->body);
        REQUIRE(b["banks"].size() == 1);
        CHECK(b["banks"][0]["name"] == "demo");
        CHECK(b["banks"][0]["directions"].size() == 3);

        auto created = api.submit(upload_png(), R"({"iters": 20, "seed": 4})");
        REQUIRE(created);
        REQUIRE(created->status == 202);
        const json job = json::parse(created->body);
        id = job["id"].get<std::string>();
        CHECK(job["state"] == "queued");
        CHECK(job["kind"] == "invert");
        CHECK(job["bank"] == "demo");
        CHECK(job["progress"]["total"] == 20);

        // The target is available right away.
        auto target = c.Get("/api/jobs/" + id + "/image?kind=target");
        REQUIRE(target);
        CHECK(target->status == 200);
        CHECK(target->get_header_value("Content-Type") == "image/png");
        const RgbImage t = decode_image(target->body);
        CHECK(t.width == 8);
        CHECK(t.height == 8);

        const json finished = api.poll_until_finished(id);
        REQUIRE(finished["state"] == "done");
        CHECK(finished["progress"]["done"] == 20);
        CHECK(finished["artifacts"]["tuned_checkpoint"] == "tuned.misockpt");

        auto image = c.Get("/api/jobs/" + id + "/image?kind=reconstruction");
        REQUIRE(image);
        REQUIRE(image->status == 200);
        recon = image->body;
        CHECK(recon == read_file(root / "jobs" / id / "reconstruction.png"));

        auto zero = c.Post("/api/results/" + id + "/edit", R"({"direction": "dir0", "strength": 0})",
                           "application/json");
        REQUIRE(zero);
        REQUIRE(zero->status == 200);
        CHECK(zero->get_header_value("Content-Type") == "image/png");
        CHECK(zero->body == recon);
        auto plain = c.Post("/api/results/" + id + "/edit", "{}", "application/json");
        REQUIRE(plain);
        CHECK(plain->body == recon);

        auto edited = c.Post("/api/results/" + id + "/edit", R"({"direction": "dir1", "strength": 2.5})",
                             "application/json");
        REQUIRE(edited);
        REQUIRE(edited->status == 200);
        CHECK(edited->body != recon);
        auto again = c.Post("/api/results/" + id + "/edit", R"({"direction": "dir1", "strength": 2.5})",
                            "application/json");
        CHECK(again->body == edited->body);

        auto manifest = c.Get("/api/results/" + id + "/manifest");
        REQUIRE(manifest);
        REQUIRE(manifest->status == 200);
        const json m = json::parse(manifest->body);
        CHECK(m["ema_iterations"] == json::array({4, 8, 12, 16}));
        CHECK(m["inputs"]["target_original_width"] == 16);
        CHECK(m["inputs"]["target_original_height"] == 12);

        auto list = c.Get("/api/jobs");
        REQUIRE(list);
        CHECK(json::parse(list->body)["jobs"].size() == 1);
    }

    // A restart reloads the job table and keeps serving edits.
    Api api(micro_options(root));
    auto c = api.client();
    auto job = c.Get("/api/jobs/" + id);
    REQUIRE(job);
    CHECK(json::parse(job->body)["state"] == "done");
    auto zero = c.Post("/api/results/" + id + "/edit", R"({"direction": "dir0", "strength": 0.0})",
                       "application/json");
    REQUIRE(zero);
    CHECK(zero->body == recon);
    // New ids do not collide with reloaded ones.
    auto created = api.submit(upload_png(), R"({"iters": 2})");
    REQUIRE(created);
    CHECK(json::parse(created->body)["id"] != id);
    api.poll_until_finished(json::parse(created->body)["id"].get<std::string>());
}

TEST_CASE("http api error paths") {
    const auto root = fresh_root("api_errors");
    Api api(micro_options(root, 1));
    auto c = api.client();

    SUBCASE("400 on bad uploads") {
        auto not_multipart = c.Post("/api/jobs", "{}", "application/json");
        REQUIRE(not_multipart);
        CHECK(not_multipart->status == 400);
        CHECK(error_of(not_multipart)["field"] == "image");

        httplib::MultipartFormDataItems no_image{{"config", "{}", "config.json", "application/json"}};
        auto missing = c.Post("/api/jobs", no_image);
        CHECK(missing->status == 400);
        CHECK(error_of(missing)["field"] == "image");

        auto garbage = api.submit("not an image", "");
        CHECK(garbage->status == 400);
        CHECK(error_of(garbage)["code"] == "bad_request");
        CHECK(error_of(garbage)["field"] == "image");

        auto bad_json = api.submit(upload_png(), "{nope");
        CHECK(bad_json->status == 400);
        CHECK(error_of(bad_json)["field"] == "config");

        auto unknown_key = api.submit(upload_png(), R"({"learning_rate": 1})");
        CHECK(unknown_key->status == 400);
        CHECK(error_of(unknown_key)["field"] == "config.learning_rate");

        auto bad_value = api.submit(upload_png(), R"({"ema_beta": 3})");
        CHECK(bad_value->status == 400);

        auto bad_bank = api.submit(upload_png(), "", "nope");
        CHECK(bad_bank->status == 400);
        CHECK(std::string(error_of(bad_bank)["message"]).find("demo") != std::string::npos);

        CHECK(json::parse(c.Get("/api/jobs")->body)["jobs"].empty());
    }

    SUBCASE("404 on unknown ids") {
        CHECK(c.Get("/api/jobs/j999999")->status == 404);
        CHECK(c.Get("/api/jobs/j999999/image?kind=target")->status == 404);
        CHECK(c.Get("/api/results/j999999/manifest")->status == 404);
        auto edit = c.Post("/api/results/j999999/edit", R"({"strength": 0})", "application/json");
        CHECK(edit->status == 404);
        CHECK(error_of(edit)["code"] == "not_found");
    }

    SUBCASE("409 while unfinished, 503 when the queue is full") {
        // The long job occupies the worker; the next one waits in the queue.
        auto running = api.submit(upload_png(), R"({"iters": 3000})");
        REQUIRE(running->status == 202);
        const std::string rid = json::parse(running->body)["id"];
        for (int i = 0; i < 500 && json::parse(c.Get("/api/jobs/" + rid)->body)["state"] == "queued"; ++i)
            std::this_thread::sleep_for(std::chrono::milliseconds(2));
        auto queued = api.submit(upload_png(), R"({"iters": 2})");
        REQUIRE(queued->status == 202);
        const std::string qid = json::parse(queued->body)["id"];

        auto edit = c.Post("/api/results/" + qid + "/edit", R"({"strength": 0})", "application/json");
        CHECK(edit->status == 409);
        CHECK(error_of(edit)["code"] == "not_finished");
        CHECK(c.Get("/api/results/" + qid + "/manifest")->status == 409);
        CHECK(c.Get("/api/jobs/" + qid + "/image?kind=reconstruction")->status == 409);
        CHECK(c.Get("/api/jobs/" + qid + "/image?kind=target")->status == 200);

        auto full = api.submit(upload_png(), R"({"iters": 2})");
        CHECK(full->status == 503);
        CHECK(error_of(full)["code"] == "queue_full");

        CHECK(api.poll_until_finished(rid)["state"] == "done");
        CHECK(api.poll_until_finished(qid)["state"] == "done");
        CHECK(c.Post("/api/results/" + qid + "/edit", R"({"strength": 0})", "application/json")->status == 200);
    }

    SUBCASE("400 on bad edit requests, 500 for failed jobs") {
        auto ok = api.submit(upload_png(), R"({"iters": 4})");
        const std::string id = json::parse(ok->body)["id"];
        REQUIRE(api.poll_until_finished(id)["state"] == "done");
        auto edit = [&](const std::string& body) {
            return c.Post("/api/results/" + id + "/edit", body, "application/json");
        };
        CHECK(edit("nope")->status == 400);
        CHECK(edit("[1]")->status == 400);
        CHECK(edit(R"({"strength": "big"})")->status == 400);
        CHECK(error_of(edit(R"({"strength": "big"})"))["field"] == "strength");
        CHECK(edit(R"({"direction": 3})")->status == 400);
        auto unknown = edit(R"({"direction": "sunset", "strength": 1})");
        CHECK(unknown->status == 400);
        CHECK(std::string(error_of(unknown)["message"]).find("dir0") != std::string::npos);
        CHECK(c.Get("/api/jobs/" + id + "/image?kind=latent")->status == 400);

        // An exploding learning rate makes the engine throw.
        auto bad = api.submit(upload_png(), R"({"iters": 5, "lr_g": 1e300})");
        REQUIRE(bad->status == 202);
        const std::string bid = json::parse(bad->body)["id"];
        const json failed = api.poll_until_finished(bid);
        CHECK(failed["state"] == "failed");
        CHECK(std::string(failed["error"]).find("non-finite") != std::string::npos);
        auto on_failed = c.Post("/api/results/" + bid + "/edit", R"({"strength": 0})", "application/json");
        CHECK(on_failed->status == 500);
        CHECK(error_of(on_failed)["code"] == "job_failed");
        CHECK(std::string(error_of(on_failed)["message"]).find("non-finite") != std::string::npos);
    }
}

TEST_CASE("service and direct engine produce identical artifacts") {
    const auto root = fresh_root("api_vs_engine");
    auto options = micro_options(root);
    const auto generator = options.generator;
    const auto bank = options.banks.front().bank;
    JobService service(std::move(options));
    const auto r = service.submit(upload_png(), {{"iters", 12}, {"seed", 9}}, "demo");
    const auto done = service.wait(r.id, std::chrono::seconds(120));
    REQUIRE(done.state == JobState::Done);

    InvertInputs in{generator, bank, ingest_target(decode_image(upload_png()), 8),
                    config_with_overrides({{"iters", 12}, {"seed", 9}}), {}};
    const auto dir = root / "direct";
    invert_to_dir(in, dir);
    for (const char* f : {"z.json", "tuned.misockpt", "anchored.misockpt", "reconstruction.png", "loss.csv"})
        CHECK_MESSAGE(read_file(dir / f) == read_file(done.dir / f), f);
    CHECK_THROWS_AS(service.get("j0"), UnknownJob);
}
