#include "fieldharm/error.hpp"
#include "fieldharm/signal.hpp"

#include "json.hpp"

#include <bit>
#include <fstream>

namespace fieldharm {

namespace {

static_assert(std::endian::native == std::endian::little, "epoch files are little-endian float32");

std::filesystem::path with_ext(const std::filesystem::path& stem, const char* ext) {
    std::filesystem::path p = stem;
    p += ext;
    return p;
}

nlohmann::json read_sidecar(const std::filesystem::path& stem) {
    const auto path = with_ext(stem, ".json");
    std::ifstream in(path);
    if (!in) {
        throw Error(Errc::Io, "cannot open sidecar " + path.string());
    }
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::Io, "malformed sidecar " + path.string() + ": " + e.what());
    }
}

}  // namespace

void write_epoch_set(const EpochSet& x, const std::filesystem::path& stem) {
    x.validate();
    const auto n_ch = x.n_channels();
    const auto n_t = x.n_times();

    std::vector<float> buffer;
    buffer.reserve(x.n_epochs() * static_cast<std::size_t>(n_ch * n_t));
    for (const auto& e : x.epochs) {
        for (Eigen::Index c = 0; c < n_ch; ++c) {
            for (Eigen::Index t = 0; t < n_t; ++t) {
                buffer.push_back(static_cast<float>(e(c, t)));
            }
        }
    }
    std::ofstream bin(with_ext(stem, ".f32"), std::ios::binary);
    if (!bin) {
        throw Error(Errc::Io, "cannot write " + with_ext(stem, ".f32").string());
    }
    bin.write(reinterpret_cast<const char*>(buffer.data()), static_cast<std::streamsize>(buffer.size() * sizeof(float)));

    nlohmann::json meta;
    meta["n_epochs"] = x.n_epochs();
    meta["n_channels"] = n_ch;
    meta["n_times"] = n_t;
    meta["sfreq"] = x.sfreq;
    meta["labels"] = x.labels;
    meta["channels"] = x.channels;
    std::ofstream side(with_ext(stem, ".json"));
    if (!side) {
        throw Error(Errc::Io, "cannot write " + with_ext(stem, ".json").string());
    }
    side << meta.dump(1) << '\n';
}

EpochSet read_epoch_set(const std::filesystem::path& stem, LabelAccess labels) {
    const nlohmann::json meta = read_sidecar(stem);
    EpochSet out;
    std::size_t n_epochs = 0;
    Eigen::Index n_ch = 0;
    Eigen::Index n_t = 0;
    try {
        n_epochs = meta.at("n_epochs").get<std::size_t>();
        n_ch = meta.at("n_channels").get<Eigen::Index>();
        n_t = meta.at("n_times").get<Eigen::Index>();
        out.sfreq = meta.at("sfreq").get<double>();
        out.channels = meta.at("channels").get<std::vector<std::string>>();
        if (labels == LabelAccess::Load) {
            out.labels = meta.at("labels").get<std::vector<int>>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::Io, "sidecar for " + stem.string() + " is missing fields: " + e.what());
    }
    if (static_cast<Eigen::Index>(out.channels.size()) != n_ch) {
        throw Error(Errc::Io, "sidecar channel list does not match n_channels");
    }

    const auto path = with_ext(stem, ".f32");
    std::ifstream bin(path, std::ios::binary);
    if (!bin) {
        throw Error(Errc::Io, "cannot open " + path.string());
    }
    const std::size_t count = n_epochs * static_cast<std::size_t>(n_ch * n_t);
    std::vector<float> buffer(count);
    bin.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(count * sizeof(float)));
    if (static_cast<std::size_t>(bin.gcount()) != count * sizeof(float) || bin.peek() != EOF) {
        throw Error(Errc::Io, path.string() + " size does not match its sidecar");
    }
    out.epochs.reserve(n_epochs);
    std::size_t k = 0;
    for (std::size_t e = 0; e < n_epochs; ++e) {
        Matrix m(n_ch, n_t);
        for (Eigen::Index c = 0; c < n_ch; ++c) {
            for (Eigen::Index t = 0; t < n_t; ++t) {
                m(c, t) = buffer[k++];
            }
        }
        out.epochs.push_back(std::move(m));
    }
    out.validate();
    return out;
}

std::vector<int> read_labels(const std::filesystem::path& stem) {
    const nlohmann::json meta = read_sidecar(stem);
    try {
        return meta.at("labels").get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::Io, "sidecar for " + stem.string() + " has no labels: " + e.what());
    }
}

}  // namespace fieldharm
