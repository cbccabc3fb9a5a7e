#include "ccar/checkpoint.hpp"
#include "ccar/dataset.hpp"
#include "ccar/probe.hpp"
#include "support.hpp"

#include <fstream>

using namespace ccar;
using namespace ccar::testing;

namespace {

void put_be32(std::vector<unsigned char>& b, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<unsigned char>(v >> s));
}

void write_bytes(const std::filesystem::path& p, const std::vector<unsigned char>& b) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

/// Four 2x3 images; pixel (i, j) = 10*i + j, labels 3, 1, 4, 1.
struct IdxFixture {
    std::filesystem::path dir, images, labels;
    std::vector<unsigned char> img, lab;

    explicit IdxFixture(const std::string& name) : dir(temp_dir(name)) {
        put_be32(img, kIdxImagesMagic);
        put_be32(img, 4);
        put_be32(img, 2);
        put_be32(img, 3);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 6; ++j) img.push_back(static_cast<unsigned char>(10 * i + j));
        put_be32(lab, kIdxLabelsMagic);
        put_be32(lab, 4);
        for (unsigned char y : {3, 1, 4, 1}) lab.push_back(y);
        images = dir / "images.idx";
        labels = dir / "labels.idx";
        write_bytes(images, img);
        write_bytes(labels, lab);
    }
};

} // namespace

TEST(Blobs, DeterministicBalancedAndSplit) {
    BlobSpec b;
    b.n_per_class = 50;
    const Dataset a = generate_blobs(b), c = generate_blobs(b);
    EXPECT_EQ(a.inputs, c.inputs);
    EXPECT_EQ(a.labels, c.labels);
    EXPECT_EQ(a.split, c.split);
    EXPECT_EQ(a.size(), 500u);
    std::vector<int> per(10, 0), train(10, 0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        ++per[static_cast<std::size_t>(a.labels[i])];
        train[static_cast<std::size_t>(a.labels[i])] += a.split[i] == Split::Train;
    }
    for (int c2 = 0; c2 < 10; ++c2) {
        EXPECT_EQ(per[static_cast<std::size_t>(c2)], 50);
        EXPECT_EQ(train[static_cast<std::size_t>(c2)], 40);
    }
    EXPECT_EQ(a.indices(Split::Train).size() + a.indices(Split::Test).size(), a.size());
    b.seed = 1;
    EXPECT_NE(generate_blobs(b).inputs, a.inputs);
}

TEST(Blobs, MeansOnSphere) {
    BlobSpec b;
    b.n_per_class = 2000;
    b.separation = 5.0;
    b.within_sigma = 0.01;
    const Dataset d = generate_blobs(b);
    for (int c = 0; c < 10; ++c) {
        Vector mean = Vector::Zero(32);
        for (std::size_t i = 0; i < d.size(); ++i)
            if (d.labels[i] == c) mean += d.inputs.row(static_cast<Eigen::Index>(i)).transpose();
        EXPECT_NEAR((mean / 2000.0).norm(), 5.0, 1e-3);
    }
}

TEST(Blobs, CollapsedClassesAreLinearlySeparable) {
    BlobSpec b;
    b.n_per_class = 40;
    b.within_sigma = 1e-6;
    const Dataset d = generate_blobs(b);
    const Dataset tr = d.subset(Split::Train), te = d.subset(Split::Test);
    ProbeConfig pc;
    pc.epochs = 100;
    EXPECT_EQ(probe({tr.inputs, tr.labels}, {te.inputs, te.labels}, pc), 1.0);
}

TEST(Blobs, ZeroSeparationIsChance) {
    BlobSpec b;
    b.separation = 0.0;
    b.n_per_class = 300;
    const Dataset d = generate_blobs(b);
    const Dataset tr = d.subset(Split::Train), te = d.subset(Split::Test);
    EXPECT_NEAR(probe({tr.inputs, tr.labels}, {te.inputs, te.labels}, ProbeConfig{}), 0.1, 0.04);
}

TEST(Blobs, RejectsBadSpec) {
    BlobSpec b;
    b.within_sigma = 0.0;
    EXPECT_ERRC(generate_blobs(b), Errc::Config);
    b = BlobSpec{};
    b.separation = -1.0;
    EXPECT_ERRC(generate_blobs(b), Errc::Config);
}

TEST(Idx, WellFormedFixture) {
    const IdxFixture f("idx_good");
    const Dataset d = load_idx(f.images.string(), f.labels.string());
    EXPECT_EQ(d.size(), 4u);
    EXPECT_EQ(d.input_dim(), 6);
    EXPECT_EQ(d.labels, (Labels{3, 1, 4, 1}));
    EXPECT_DOUBLE_EQ(d.inputs(2, 4), 24.0 / 255.0);
    EXPECT_DOUBLE_EQ(d.inputs(0, 0), 0.0);
}

TEST(Idx, Limit) {
    const IdxFixture f("idx_limit");
    const Dataset d = load_idx(f.images.string(), f.labels.string(), 2);
    EXPECT_EQ(d.size(), 2u);
    EXPECT_EQ(d.labels, (Labels{3, 1}));
    EXPECT_EQ(d.inputs, load_idx(f.images.string(), f.labels.string()).inputs.topRows(2));
}

TEST(Idx, Errors) {
    IdxFixture f("idx_bad");
    auto bad = f.img;
    bad[3] = 0x01;
    write_bytes(f.dir / "bad_magic.idx", bad);
    EXPECT_ERRC(load_idx((f.dir / "bad_magic.idx").string(), f.labels.string()), Errc::BadMagic);
    EXPECT_ERRC(load_idx(f.labels.string(), f.labels.string()), Errc::BadMagic);

    auto cut = f.img;
    cut.resize(cut.size() - 1);
    write_bytes(f.dir / "cut.idx", cut);
    EXPECT_ERRC(load_idx((f.dir / "cut.idx").string(), f.labels.string()), Errc::TruncatedFile);
    EXPECT_NO_THROW(load_idx((f.dir / "cut.idx").string(), f.labels.string(), 3));
    write_bytes(f.dir / "header.idx", std::vector<unsigned char>(f.img.begin(), f.img.begin() + 6));
    EXPECT_ERRC(load_idx((f.dir / "header.idx").string(), f.labels.string()), Errc::TruncatedFile);

    EXPECT_ERRC(load_idx(f.images.string(), f.labels.string(), 0, 4), Errc::LabelRangeError);
    EXPECT_ERRC(load_idx((f.dir / "missing.idx").string(), f.labels.string()), Errc::Io);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    Gen g(81);
    const auto dir = temp_dir("ckpt_roundtrip");
    for (int t = 0; t < 20; ++t) {
        const int c = g.integer(2, 6);
        const int d = g.integer(c, 20);
        std::vector<int> hidden;
        for (int l = g.integer(0, 2); l > 0; --l) hidden.push_back(g.integer(1, 12));
        const Model m = make_mlp(g.integer(1, 9), hidden, d, c, g.rng());
        const SubspacePartition p(d, c);
        const auto path = (dir / ("m" + std::to_string(t) + ".ccar")).string();
        save_checkpoint(m, p, {static_cast<std::uint64_t>(t), 7, "lambda = 3\n"}, path);
        const Checkpoint ck = load_checkpoint(path);
        EXPECT_TRUE(ck.model == m);
        EXPECT_TRUE(ck.partition == p);
        EXPECT_EQ(ck.meta.config, "lambda = 3\n");
        EXPECT_EQ(ck.meta.epoch, 7u);
        const Matrix x = g.matrix(5, m.input_dim());
        EXPECT_EQ(forward(ck.model, x).logits, forward(m, x).logits);
    }
}

TEST(Checkpoint, TruncationAndVersion) {
    const Model m = make_mlp(3, {4}, 6, 2, 1);
    const auto bytes = encode_checkpoint(m, SubspacePartition(6, 2), {});
    for (std::size_t len : {std::size_t{0}, std::size_t{5}, std::size_t{12}, bytes.size() / 2, bytes.size() - 1}) {
        const std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(len));
        EXPECT_ERRC(decode_checkpoint(cut), Errc::CorruptCheckpoint);
    }
    auto bumped = bytes;
    bumped[8] = static_cast<std::uint8_t>(kCheckpointVersion + 1);
    EXPECT_ERRC(decode_checkpoint(bumped), Errc::VersionMismatch);
    EXPECT_ERRC(encode_checkpoint(m, SubspacePartition(6, 3), {}), Errc::IncompatibleShapes);
}

TEST(CheckpointProperty, EverySingleByteCorruptionDetected) {
    const Model m = make_mlp(3, {4}, 6, 2, 1);
    const auto bytes = encode_checkpoint(m, SubspacePartition(6, 2), {5, 1, "x"});
    Gen g(82);
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        auto bad = bytes;
        bad[i] ^= static_cast<std::uint8_t>(g.integer(1, 255));
        try {
            decode_checkpoint(bad);
            ADD_FAILURE() << "corruption at byte " << i << " went unnoticed";
        } catch (const Error& e) {
            EXPECT_TRUE(e.code() == Errc::CorruptCheckpoint || e.code() == Errc::VersionMismatch) << i;
        }
    }
}
