#include "atomdet/config.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace atomdet;

TEST(Presets, DeskAndPaper) {
    const ToolkitConfig desk = preset_config("desk");
    EXPECT_EQ(desk.dataset.geometry.image_width(), 256);
    EXPECT_EQ(desk.dataset.geometry.site_count(), 100u);
    EXPECT_EQ(desk.dataset.frames_per_exposure, 20u);
    EXPECT_EQ(desk.dataset.exposures.size(), 6u);
    EXPECT_EQ(desk.bound.psf_window, 41);

    const ToolkitConfig paper = preset_config("paper");
    EXPECT_EQ(paper.dataset.geometry.image_width(), 1024);
    EXPECT_EQ(paper.dataset.geometry.site_count(), 1600u);
    EXPECT_EQ(paper.dataset.frames_per_exposure, 100u);
    EXPECT_EQ(paper.dataset.exposures.size(), 12u);
    EXPECT_EQ(paper.bound.psf_window, 81);
    EXPECT_DOUBLE_EQ(paper.dataset.rate, 2881.0);
    EXPECT_TRUE(paper.dataset.geometry.pixel_aligned());

    EXPECT_THROW(preset_config("huge"), InvalidArgument);
}

TEST(ConfigJson, RoundTrip) {
    ToolkitConfig c = preset_config("desk");
    c.dataset.seed = 77;
    c.dataset.camera.gain = 0.8;
    c.dataset.psf = {PsfShape::gaussian, 2.2, 31};
    c.wiener.balances = {3, 10, 35};
    c.gns.tile_size = 128;
    c.gns.warm_start = false;
    c.benchmark.detectors = {"roi", "gns"};
    const ToolkitConfig back = config_from_json(to_json(c), preset_config("paper"));
    EXPECT_EQ(to_json(back), to_json(c));
    EXPECT_EQ(back.dataset.geometry, c.dataset.geometry);
    EXPECT_EQ(back.dataset.camera, c.dataset.camera);
    EXPECT_EQ(back.dataset.exposures.size(), c.dataset.exposures.size());
}

TEST(ConfigJson, PartialOverridesKeepDefaults) {
    const Json j = Json::parse(R"({"simulation": {"seed": 5, "exposures_ms": [10, 20]},
                                   "detectors": {"rl": {"iterations": [2, 4]}}})");
    const ToolkitConfig c = config_from_json(j);
    EXPECT_EQ(c.dataset.seed, 5u);
    ASSERT_EQ(c.dataset.exposures.size(), 2u);
    EXPECT_DOUBLE_EQ(c.dataset.exposures[1], 0.02);
    EXPECT_EQ(c.rl.iterations, (std::vector<int>{2, 4}));
    EXPECT_EQ(c.dataset.frames_per_exposure, 20u);
    EXPECT_DOUBLE_EQ(c.wiener.balances.at(0), 10.0);
}

TEST(ConfigJson, PresetKeyAndErrors) {
    const ToolkitConfig c = config_from_json(Json::parse(R"({"preset": "paper"})"));
    EXPECT_EQ(c.dataset.geometry.image_width(), 1024);
    EXPECT_THROW(config_from_json(Json::parse(R"({"simulation": {"seed": "x"}})")), InvalidArgument);
    EXPECT_THROW(load_config("/nonexistent/atomdet.json"), IoError);
}

TEST(ConfigJson, FileRoundTrip) {
    const auto path = std::filesystem::temp_directory_path() / "atomdet_config_unit.json";
    const ToolkitConfig c = preset_config("paper");
    write_json_file(to_json(c), path);
    EXPECT_EQ(to_json(load_config(path)), to_json(c));
    std::filesystem::remove(path);
}

TEST(ConfigFiles, ShippedFilesMatchPresets) {
    const std::filesystem::path dir = ATOMDET_CONFIG_DIR;
    for (const char* name : {"desk", "paper"}) {
        const ToolkitConfig c = load_config(dir / (std::string(name) + ".json"), preset_config("paper"));
        EXPECT_EQ(to_json(c), to_json(preset_config(name))) << name;
    }
    EXPECT_NO_THROW(load_config(dir / "smoke.json"));
}
