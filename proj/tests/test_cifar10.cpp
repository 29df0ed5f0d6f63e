#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rocketnet/cifar10.hpp"
#include "rocketnet/errors.hpp"
#include "support/testutil.hpp"

using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::MessageMatches;
using rocket::CifarRecord;
using rocket::kCifarPixels;
using rocket::kCifarRecordBytes;

namespace {

std::string record_bytes(std::uint8_t label, std::uint8_t fill) {
    std::string bytes(kCifarRecordBytes, static_cast<char>(fill));
    bytes[0] = static_cast<char>(label);
    return bytes;
}

CifarRecord patterned_record(std::uint8_t label, std::size_t salt) {
    CifarRecord r;
    r.label = label;
    for (std::size_t j = 0; j < kCifarPixels; ++j) {
        r.pixels[j] = static_cast<std::uint8_t>((salt * 7 + j * 13) % 256);
    }
    return r;
}

}  // namespace

TEST_CASE("a single all-black record loads with its label intact", "[cifar10]") {
    testutil::TempDir dir;
    const std::string path = dir.file("one.bin");
    testutil::write_file(path, record_bytes(7, 0));

    const rocket::Dataset ds = rocket::read_cifar10_binary(path, "test");
    REQUIRE(ds.size() == 1);
    CHECK(ds.labels[0] == 7);
    CHECK(ds.classes == 10);
    CHECK(ds.dim() == kCifarPixels);
    CHECK(ds.split == "test");
    // One record has no spread, so standardization only centers: every
    // channel was uniformly zero and stays zero.
    for (std::size_t j = 0; j < kCifarPixels; ++j) CHECK(ds.features.at(0, j) == 0.0);
}

TEST_CASE("truncated files are rejected with the partial record's offset", "[cifar10]") {
    testutil::TempDir dir;

    const std::string short_one = dir.file("short.bin");
    testutil::write_file(short_one, std::string(kCifarPixels, '\0'));  // one byte shy
    CHECK_THROWS_MATCHES(rocket::parse_cifar10_records(short_one), rocket::FormatError,
                         MessageMatches(ContainsSubstring("truncated") &&
                                        ContainsSubstring("byte offset 0")));

    const std::string short_third = dir.file("short3.bin");
    testutil::write_file(short_third, record_bytes(1, 5) + record_bytes(2, 6) + "abc");
    CHECK_THROWS_MATCHES(
        rocket::parse_cifar10_records(short_third), rocket::FormatError,
        MessageMatches(ContainsSubstring("byte offset " + std::to_string(2 * kCifarRecordBytes))));
}

TEST_CASE("out-of-range labels name the offending record", "[cifar10]") {
    testutil::TempDir dir;
    const std::string path = dir.file("badlabel.bin");
    testutil::write_file(path, record_bytes(3, 0) + record_bytes(10, 0));
    CHECK_THROWS_MATCHES(rocket::parse_cifar10_records(path), rocket::FormatError,
                         MessageMatches(ContainsSubstring("record 1") &&
                                        ContainsSubstring("label 10")));
}

TEST_CASE("parse and write are byte-exact inverses", "[cifar10]") {
    testutil::TempDir dir;
    std::vector<CifarRecord> records;
    for (std::size_t i = 0; i < 4; ++i) {
        records.push_back(patterned_record(static_cast<std::uint8_t>(i * 2), i));
    }
    const std::string first = dir.file("first.bin");
    rocket::write_cifar10_records(records, first);

    const std::vector<CifarRecord> back = rocket::parse_cifar10_records(first);
    REQUIRE(back.size() == records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        CHECK(back[i].label == records[i].label);
        CHECK(back[i].pixels == records[i].pixels);
    }

    const std::string second = dir.file("second.bin");
    rocket::write_cifar10_records(back, second);
    CHECK(testutil::read_file(second) == testutil::read_file(first));
}

TEST_CASE("loaded pixels are standardized per channel", "[cifar10]") {
    testutil::TempDir dir;
    std::vector<CifarRecord> records;
    for (std::size_t i = 0; i < 6; ++i) {
        CifarRecord r = patterned_record(static_cast<std::uint8_t>(i), i * 11 + 3);
        // Flatten the first channel to a constant so the zero-variance
        // branch is exercised alongside the standard one.
        for (std::size_t j = 0; j < kCifarPixels / 3; ++j) r.pixels[j] = 100;
        records.push_back(r);
    }
    const std::string path = dir.file("train.bin");
    rocket::write_cifar10_records(records, path);
    const rocket::Dataset ds = rocket::read_cifar10_binary(path, "train");

    const std::size_t plane = kCifarPixels / 3;
    for (std::size_t c = 0; c < 3; ++c) {
        double sum = 0.0, sum_sq = 0.0;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            for (std::size_t j = c * plane; j < (c + 1) * plane; ++j) {
                sum += ds.features.at(i, j);
                sum_sq += ds.features.at(i, j) * ds.features.at(i, j);
            }
        }
        const double n = static_cast<double>(ds.size() * plane);
        const double mean = sum / n;
        const double var = sum_sq / n - mean * mean;
        CHECK(std::fabs(mean) < 1e-9);
        if (c == 0) {
            CHECK(std::fabs(var) < 1e-12);  // constant channel: centered, not divided
        } else {
            CHECK(var == Catch::Approx(1.0).margin(1e-9));
        }
    }
}

TEST_CASE("empty files parse to nothing and refuse to become datasets", "[cifar10]") {
    testutil::TempDir dir;
    const std::string path = dir.file("empty.bin");
    testutil::write_file(path, "");
    CHECK(rocket::parse_cifar10_records(path).empty());
    CHECK_THROWS_MATCHES(rocket::read_cifar10_binary(path, "train"), rocket::FormatError,
                         MessageMatches(ContainsSubstring("holds no records")));
    CHECK_THROWS_AS(rocket::parse_cifar10_records(dir.file("missing.bin")), rocket::IoError);
}
