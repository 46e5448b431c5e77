#include <gtest/gtest.h>

#include "recexplain/error.hpp"
#include "recexplain/util.hpp"
#include "test_support.hpp"

using namespace recexplain;

TEST(Sha256, KnownVectors) {
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Strings, TrimLowerSplitWords) {
    EXPECT_EQ(trim("  a b \n"), "a b");
    EXPECT_EQ(trim(" \t "), "");
    EXPECT_EQ(to_lower("GoodFellas"), "goodfellas");
    EXPECT_EQ(split("1::Heat (1995)::Action|Crime", "::"), (std::vector<std::string>{"1", "Heat (1995)", "Action|Crime"}));
    EXPECT_EQ(split("", "|"), (std::vector<std::string>{""}));
    EXPECT_EQ(count_words("  one two\tthree\n"), 3u);
    EXPECT_EQ(count_words(""), 0u);
}

TEST(Files, AtomicWriteAppendAndReadLines) {
    testsupport::TempDir dir;
    const auto path = dir / "nested/out.txt";
    write_file_atomic(path, "first\r\nsecond\n");
    EXPECT_EQ(read_lines(path), (std::vector<std::string>{"first", "second"}));
    append_line(path, "third");
    EXPECT_EQ(read_file(path), "first\r\nsecond\nthird\n");
    write_file_atomic(path, "replaced");
    EXPECT_EQ(read_file(path), "replaced");
    EXPECT_FALSE(std::filesystem::exists(dir / "nested/out.txt.tmp"));
}

TEST(Files, MissingFileIsIoError) {
    try {
        read_file("/nonexistent/recexplain/file");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::io);
    }
}

TEST(Errors, StageIsSetOnce) {
    const Error e(ErrorCode::lookup, "missing");
    EXPECT_EQ(e.with_stage("catalog").stage(), "catalog");
    EXPECT_EQ(e.with_stage("catalog").with_stage("selection").stage(), "catalog");
    const TransportError t("refused", true, 3, 503);
    EXPECT_EQ(t.code(), ErrorCode::transport);
    EXPECT_EQ(t.attempts(), 3);
    EXPECT_EQ(TransportError("bad request", false, 1, 400).code(), ErrorCode::contract);
}
