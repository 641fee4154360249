// Exercises the shared library only through atg.h.

#include <atg/atg.h>
#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

namespace {

namespace fs = std::filesystem;

struct ConfigHandle {
  atg_config* p = nullptr;
  ConfigHandle() { EXPECT_EQ(atg_config_new(&p), ATG_OK); }
  ~ConfigHandle() { atg_config_free(p); }
};

void use_small_network(atg_config* c) {
  ASSERT_EQ(atg_config_set(c, "network", "reduced"), ATG_OK);
  ASSERT_EQ(atg_config_set(c, "render.columns", "12"), ATG_OK);
  ASSERT_EQ(atg_config_set(c, "render.rows", "12"), ATG_OK);
}

TEST(CApi, StatusNamesAndVersion) {
  EXPECT_STREQ(atg_status_name(ATG_OK), "ok");
  EXPECT_NE(atg_status_name(ATG_ERR_CONFIG), nullptr);
  EXPECT_GT(std::strlen(atg_version()), 0u);
}

TEST(CApi, ConfigKeys) {
  ConfigHandle c;
  EXPECT_EQ(atg_config_set(c.p, "train.alpha", "0.0003"), ATG_OK);
  EXPECT_EQ(std::stod(atg_config_get(c.p, "train.alpha")), 3e-4);
  EXPECT_EQ(atg_config_set(c.p, "train.bogus", "1"), ATG_ERR_CONFIG);
  EXPECT_NE(std::string(atg_last_error()).find("train.bogus"), std::string::npos);
  EXPECT_EQ(atg_config_get(c.p, "bogus"), nullptr);
  EXPECT_EQ(atg_config_validate(c.p), ATG_OK);
  EXPECT_EQ(atg_config_set(c.p, "render.columns", "13"), ATG_OK);
  EXPECT_EQ(atg_config_validate(c.p), ATG_ERR_CONFIG);
  EXPECT_NE(std::string(atg_config_text(c.p)).find("columns: 13"), std::string::npos);

  const fs::path path = fs::temp_directory_path() / "atg_capi_config.yaml";
  ASSERT_EQ(atg_config_save(c.p, path.c_str()), ATG_OK);
  atg_config* back = nullptr;
  ASSERT_EQ(atg_config_load(path.c_str(), &back), ATG_OK);
  EXPECT_EQ(std::stod(atg_config_get(back, "train.alpha")), 3e-4);
  atg_config_free(back);
  EXPECT_EQ(atg_config_load("/nonexistent/cfg.yaml", &back), ATG_ERR_CONFIG);
  fs::remove(path);
}

TEST(CApi, SuiteAndActions) {
  ASSERT_EQ(atg_env_suite_size(), 8u);
  EXPECT_STREQ(atg_env_suite_name(0), "Standard");
  EXPECT_EQ(atg_env_suite_name(8), nullptr);
  const char* names[] = {"turn-left", "turn-right", "turn-left-and-move-forward",
                         "turn-right-and-move-forward", "move-forward", "no-op"};
  for (int i = 0; i < 6; ++i) {
    EXPECT_EQ(atg_action_from_name(names[i]), i);
    EXPECT_STREQ(atg_action_name(i), names[i]);
  }
  EXPECT_EQ(atg_action_from_name("jump"), -1);
  EXPECT_EQ(atg_action_name(6), nullptr);
}

TEST(CApi, EnvEpisode) {
  ConfigHandle c;
  ASSERT_EQ(atg_config_set(c.p, "termination.max_length", "5"), ATG_OK);
  atg_env* env = nullptr;
  EXPECT_EQ(atg_env_new(c.p, "NoSuchEnv", &env), ATG_ERR_USAGE);
  ASSERT_EQ(atg_env_new(c.p, nullptr, &env), ATG_OK);
  double r = 0;
  int terminal = 0;
  EXPECT_EQ(atg_env_step(env, 5, &r, &terminal), ATG_ERR_USAGE);  // no reset yet
  ASSERT_EQ(atg_env_reset(env, 3), ATG_OK);

  size_t size = 0;
  int w = 0, h = 0, ch = 0;
  ASSERT_EQ(atg_env_observation(env, nullptr, 0, &size, &w, &h, &ch), ATG_OK);
  EXPECT_EQ(size, 84u * 84u * 3u);
  EXPECT_EQ(w, 84);
  EXPECT_EQ(ch, 3);
  std::vector<uint8_t> small(10);
  EXPECT_EQ(atg_env_observation(env, small.data(), small.size(), &size, &w, &h, &ch),
            ATG_ERR_USAGE);
  std::vector<uint8_t> buf(size);
  ASSERT_EQ(atg_env_observation(env, buf.data(), buf.size(), &size, &w, &h, &ch), ATG_OK);

  EXPECT_EQ(atg_env_step(env, 9, &r, &terminal), ATG_ERR_USAGE);
  double total = 0;
  for (int t = 0; t < 5; ++t) {
    ASSERT_EQ(atg_env_step(env, 4, &r, &terminal), ATG_OK);
    total += r;
    EXPECT_EQ(terminal, t == 4 ? 1 : 0);
  }
  int step = 0;
  double acc = 0;
  ASSERT_EQ(atg_env_progress(env, &step, &acc), ATG_OK);
  EXPECT_EQ(step, 5);
  EXPECT_DOUBLE_EQ(acc, total);
  EXPECT_EQ(atg_env_step(env, 4, &r, &terminal), ATG_ERR_USAGE);
  double x = 0, y = 0, a = 0;
  EXPECT_EQ(atg_env_local(env, &x, &y, &a), ATG_OK);
  atg_env_free(env);
}

TEST(CApi, RunsEndToEnd) {
  const fs::path dir = fs::temp_directory_path() / "atg_capi_runs";
  fs::remove_all(dir);
  ConfigHandle c;
  use_small_network(c.p);
  ASSERT_EQ(atg_config_set(c.p, "termination.max_length", "30"), ATG_OK);
  ASSERT_EQ(atg_config_set(c.p, "train.workers", "1"), ATG_OK);
  ASSERT_EQ(atg_config_set(c.p, "train.max_env_steps", "40"), ATG_OK);
  ASSERT_EQ(atg_config_set(c.p, "train.validation_interval", "20"), ATG_OK);
  ASSERT_EQ(atg_config_set(c.p, "train.validation_episodes", "1"), ATG_OK);
  ASSERT_EQ(atg_config_set(c.p, "augment.perturbations", "1"), ATG_OK);
  ASSERT_EQ(atg_config_set(c.p, "eval.episodes", "2"), ATG_OK);
  ASSERT_EQ(atg_config_set(c.p, "eval.saliency_frames", "1"), ATG_OK);

  int calls = 0;
  atg_train_result tr{};
  ASSERT_EQ(atg_train(
                c.p, (dir / "train").c_str(),
                [](int64_t, double, double, void* user) { ++*static_cast<int*>(user); }, &calls,
                &tr),
            ATG_OK)
      << atg_last_error();
  EXPECT_GE(tr.global_steps, 40);
  EXPECT_EQ(static_cast<size_t>(calls), tr.validations);

  const std::string ckpt = (dir / "train" / "final.ckpt").string();
  atg_eval_result er{};
  ASSERT_EQ(atg_eval(c.p, ckpt.c_str(), (dir / "eval").c_str(), &er), ATG_OK) << atg_last_error();
  EXPECT_EQ(er.episodes, 2u);
  EXPECT_EQ(atg_eval(c.p, "/nonexistent.ckpt", (dir / "eval2").c_str(), &er), ATG_ERR_IO);

  atg_replay_result rr{};
  const std::string trace = (dir / "eval" / "traces" / "Standard_seed1.jsonl").string();
  ASSERT_EQ(atg_replay(c.p, trace.c_str(), nullptr, -1, &rr), ATG_OK) << atg_last_error();
  EXPECT_TRUE(rr.ok);
  EXPECT_EQ(rr.trace_el, rr.replay_el);

  atg_saliency_result sr{};
  ASSERT_EQ(atg_saliency(c.p, ckpt.c_str(), (dir / "sal").c_str(), &sr), ATG_OK)
      << atg_last_error();
  EXPECT_EQ(sr.frames, 1);

  ConfigHandle full;
  ASSERT_EQ(atg_config_set(full.p, "eval.episodes", "1"), ATG_OK);
  ASSERT_EQ(atg_config_set(full.p, "termination.max_length", "20"), ATG_OK);
  // The checkpoint was written for the reduced network.
  EXPECT_EQ(atg_eval(full.p, ckpt.c_str(), (dir / "eval3").c_str(), &er), ATG_ERR_IO);
  ASSERT_EQ(atg_baseline(full.p, (dir / "base").c_str(), &er), ATG_OK);
  EXPECT_EQ(er.episodes, 1u);
  fs::remove_all(dir);
}

TEST(CApi, ServerLifecycle) {
  ConfigHandle c;
  atg_server* s = nullptr;
  ASSERT_EQ(atg_server_new(c.p, "127.0.0.1", 0, &s), ATG_OK);
  EXPECT_GT(atg_server_port(s), 0);
  atg_server* clash = nullptr;
  EXPECT_EQ(atg_server_new(c.p, "127.0.0.1", atg_server_port(s), &clash), ATG_ERR_IO);
  std::thread t([s] { EXPECT_EQ(atg_server_run(s), ATG_OK); });
  atg_server_stop(s);
  t.join();
  atg_server_free(s);
}

TEST(CApi, ErrorsArePerThread) {
  ConfigHandle c;
  EXPECT_EQ(atg_config_set(c.p, "nope", "1"), ATG_ERR_CONFIG);
  std::string other;
  std::thread([&] {
    ConfigHandle d;
    atg_config_set(d.p, "elsewhere", "1");
    other = atg_last_error();
  }).join();
  EXPECT_NE(std::string(atg_last_error()).find("nope"), std::string::npos);
  EXPECT_NE(other.find("elsewhere"), std::string::npos);
}

}  // namespace
