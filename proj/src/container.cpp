#include "naw/container.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "naw/quant.hpp"
#include "naw/tensor.hpp"

namespace naw {

namespace {

constexpr char kMagic[4] = {'N', 'A', 'W', '1'};
constexpr uint16_t kVersion = 1;
constexpr uint64_t kNoOffset = ~0ULL;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw std::runtime_error(path + ": " + what);
}

// ---- little-endian writer ----------------------------------------------

struct Writer {
    std::vector<uint8_t> bytes;

    void u8(uint8_t v) { bytes.push_back(v); }
    void u16(uint16_t v) {
        for (int i = 0; i < 2; ++i) bytes.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void i32(int32_t v) { u32(static_cast<uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<uint64_t>(v)); }
    void f32(float v) { u32(std::bit_cast<uint32_t>(v)); }
    void raw(const void* p, size_t n) {
        const auto* b = static_cast<const uint8_t*>(p);
        bytes.insert(bytes.end(), b, b + n);
    }
    void str(const std::string& s) {
        if (s.size() > 0xFFFF) throw std::invalid_argument("container: string too long");
        u16(static_cast<uint16_t>(s.size()));
        raw(s.data(), s.size());
    }
};

// ---- bounds-checked little-endian reader ---------------------------------

struct Reader {
    const std::string& path;
    const std::vector<uint8_t>& bytes;
    size_t pos = 0;

    void need(size_t n) const {
        if (pos + n > bytes.size()) fail(path, "truncated container");
    }
    uint8_t u8() {
        need(1);
        return bytes[pos++];
    }
    uint16_t u16() {
        need(2);
        uint16_t v = 0;
        for (int i = 0; i < 2; ++i) v |= static_cast<uint16_t>(bytes[pos + i]) << (8 * i);
        pos += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(bytes[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    int32_t i32() { return static_cast<int32_t>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const size_t n = u16();
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
        pos += n;
        return s;
    }
};

// ---- quant-spec blob ------------------------------------------------------

void write_qspec(Writer& w, const QuantSpec& spec) {
    w.i32(spec.bits);
    w.u8(static_cast<uint8_t>(spec.scheme));
    w.i32(spec.zero_point);
    w.i32(spec.channel_axis);
    w.i32(spec.qmin);
    w.i32(spec.qmax);
    w.u32(static_cast<uint32_t>(spec.scale.size()));
    for (double s : spec.scale) w.f64(s);
}

QuantSpec read_qspec(Reader& r) {
    QuantSpec spec;
    spec.bits = r.i32();
    const uint8_t scheme = r.u8();
    if (scheme > 1) fail(r.path, "unknown quantization scheme tag");
    spec.scheme = static_cast<QScheme>(scheme);
    spec.zero_point = r.i32();
    spec.channel_axis = r.i32();
    spec.qmin = r.i32();
    spec.qmax = r.i32();
    const uint32_t n = r.u32();
    spec.scale.resize(n);
    for (uint32_t i = 0; i < n; ++i) spec.scale[i] = r.f64();
    spec.validate();
    return spec;
}

// ---- activation specs <-> JSON -------------------------------------------

std::string specs_to_json(const ActivationSpecs& specs) {
    nlohmann::json j = nlohmann::json::object();
    if (specs.empty() && specs.ranges.empty()) return j.dump();
    nlohmann::json sites = nlohmann::json::object();
    for (const auto& [name, spec] : specs.sites) {
        sites[name] = {{"bits", spec.bits},
                       {"scheme", to_string(spec.scheme)},
                       {"scale", spec.scale},
                       {"zero_point", spec.zero_point},
                       {"channel_axis", spec.channel_axis},
                       {"qmin", spec.qmin},
                       {"qmax", spec.qmax}};
    }
    nlohmann::json ranges = nlohmann::json::object();
    for (const auto& [name, range] : specs.ranges)
        ranges[name] = {range.first, range.second};
    j["sites"] = std::move(sites);
    j["ranges"] = std::move(ranges);
    return j.dump();
}

ActivationSpecs specs_from_json(const std::string& path, const std::string& text) {
    ActivationSpecs specs;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        fail(path, std::string("bad calibration block: ") + e.what());
    }
    if (!j.is_object()) fail(path, "calibration block is not an object");
    if (j.contains("sites")) {
        for (const auto& [name, s] : j.at("sites").items()) {
            QuantSpec spec;
            spec.bits = s.at("bits").get<int>();
            const std::string scheme = s.at("scheme").get<std::string>();
            if (scheme == "per_tensor_asym")
                spec.scheme = QScheme::per_tensor_asym;
            else if (scheme == "per_channel_sym")
                spec.scheme = QScheme::per_channel_sym;
            else
                fail(path, "unknown scheme for site " + name);
            spec.scale = s.at("scale").get<std::vector<double>>();
            spec.zero_point = s.at("zero_point").get<int>();
            spec.channel_axis = s.value("channel_axis", 0);
            spec.qmin = s.value("qmin", -128);
            spec.qmax = s.value("qmax", 127);
            spec.validate();
            specs.sites[name] = std::move(spec);
        }
    }
    if (j.contains("ranges")) {
        for (const auto& [name, r] : j.at("ranges").items()) {
            if (!r.is_array() || r.size() != 2)
                fail(path, "bad observed range for site " + name);
            specs.ranges[name] = {r[0].get<double>(), r[1].get<double>()};
        }
    }
    return specs;
}

size_t dtype_bytes(Dtype d) {
    switch (d) {
        case Dtype::f32: return 4;
        case Dtype::bf16: return 2;
        case Dtype::i8: return 1;
    }
    return 0;
}

}  // namespace

void container_save(const std::string& path, const WeightStore& store,
                    const ActivationSpecs& specs, const std::string& config_json) {
    // Payload first so the table can carry final offsets.
    Writer payload;
    struct Entry {
        const std::string* name;
        const Tensor* tensor;
        uint64_t qspec_off = kNoOffset, qspec_len = 0;
        uint64_t data_off = 0, data_len = 0;
    };
    std::vector<Entry> entries;
    entries.reserve(store.tensors.size());
    for (const auto& [name, tensor] : store.tensors) {
        Entry e{&name, &tensor, kNoOffset, 0, 0, 0};
        const auto count = static_cast<size_t>(tensor.count());
        switch (tensor.dtype) {
            case Dtype::f32:
                if (tensor.f32.size() != count)
                    throw std::invalid_argument("container: bad f32 payload for " + name);
                e.data_off = payload.bytes.size();
                for (float v : tensor.f32) payload.f32(v);
                break;
            case Dtype::bf16:
                if (tensor.f32.size() != count)
                    throw std::invalid_argument("container: bad bf16 payload for " + name);
                e.data_off = payload.bytes.size();
                for (float v : tensor.f32) {
                    if (bf16_round(v) != v && !(v != v))
                        throw std::invalid_argument(
                            "container: non-bf16 value in bf16 tensor " + name);
                    payload.u16(static_cast<uint16_t>(std::bit_cast<uint32_t>(v) >> 16));
                }
                break;
            case Dtype::i8: {
                if (tensor.i8.size() != count)
                    throw std::invalid_argument("container: bad i8 payload for " + name);
                e.qspec_off = payload.bytes.size();
                write_qspec(payload, tensor.qspec);
                e.qspec_len = payload.bytes.size() - e.qspec_off;
                e.data_off = payload.bytes.size();
                payload.raw(tensor.i8.data(), tensor.i8.size());
                break;
            }
        }
        e.data_len = payload.bytes.size() - e.data_off;
        entries.push_back(e);
    }

    Writer out;
    out.raw(kMagic, 4);
    out.u16(kVersion);
    if (config_json.size() > 0xFFFFFFFFu || payload.bytes.size() > 0xFFFFFFFFu)
        throw std::invalid_argument("container: payload too large");
    out.u32(static_cast<uint32_t>(config_json.size()));
    out.raw(config_json.data(), config_json.size());
    const std::string calib = specs_to_json(specs);
    out.u32(static_cast<uint32_t>(calib.size()));
    out.raw(calib.data(), calib.size());
    out.u32(static_cast<uint32_t>(entries.size()));
    for (const Entry& e : entries) {
        out.str(*e.name);
        out.u8(static_cast<uint8_t>(e.tensor->dtype));
        out.i32(e.tensor->channel_axis);
        out.u8(static_cast<uint8_t>(e.tensor->shape.size()));
        for (int d : e.tensor->shape) out.i32(d);
        out.u64(e.qspec_off);
        out.u64(e.qspec_len);
        out.u64(e.data_off);
        out.u64(e.data_len);
    }
    out.u64(payload.bytes.size());
    out.raw(payload.bytes.data(), payload.bytes.size());

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) fail(path, "cannot open file for writing");
    file.write(reinterpret_cast<const char*>(out.bytes.data()),
               static_cast<long>(out.bytes.size()));
    if (!file) fail(path, "short write");
}

ContainerData container_load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open file");
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    Reader r{path, bytes, 0};

    r.need(6);
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) fail(path, "bad magic, not a weight container");
    r.pos = 4;
    const uint16_t version = r.u16();
    if (version != kVersion)
        fail(path, "unsupported container version " + std::to_string(version));

    ContainerData out;
    {
        const uint32_t n = r.u32();
        r.need(n);
        out.config_json.assign(reinterpret_cast<const char*>(bytes.data() + r.pos), n);
        r.pos += n;
    }
    std::string calib;
    {
        const uint32_t n = r.u32();
        r.need(n);
        calib.assign(reinterpret_cast<const char*>(bytes.data() + r.pos), n);
        r.pos += n;
    }
    out.specs = specs_from_json(path, calib);

    struct Entry {
        std::string name;
        Dtype dtype;
        int channel_axis;
        std::vector<int> shape;
        uint64_t qspec_off, qspec_len, data_off, data_len;
    };
    const uint32_t n_tensors = r.u32();
    std::vector<Entry> entries;
    entries.reserve(n_tensors);
    for (uint32_t i = 0; i < n_tensors; ++i) {
        Entry e;
        e.name = r.str();
        const uint8_t dtype = r.u8();
        if (dtype > 2) fail(path, "unknown dtype tag for tensor " + e.name);
        e.dtype = static_cast<Dtype>(dtype);
        e.channel_axis = r.i32();
        const uint8_t ndim = r.u8();
        e.shape.resize(ndim);
        for (uint8_t d = 0; d < ndim; ++d) {
            e.shape[d] = r.i32();
            if (e.shape[d] <= 0) fail(path, "non-positive dimension in tensor " + e.name);
        }
        e.qspec_off = r.u64();
        e.qspec_len = r.u64();
        e.data_off = r.u64();
        e.data_len = r.u64();
        entries.push_back(std::move(e));
    }
    const uint64_t payload_len = r.u64();
    r.need(payload_len);
    const size_t payload_base = r.pos;

    // Offsets must stay inside the payload and must not overlap.
    std::vector<std::pair<uint64_t, uint64_t>> spans;
    for (const Entry& e : entries) {
        if (e.data_off + e.data_len > payload_len)
            fail(path, "tensor " + e.name + " data lies outside the payload");
        spans.emplace_back(e.data_off, e.data_len);
        if (e.qspec_off != kNoOffset) {
            if (e.qspec_off + e.qspec_len > payload_len)
                fail(path, "tensor " + e.name + " quant spec lies outside the payload");
            spans.emplace_back(e.qspec_off, e.qspec_len);
        }
    }
    std::sort(spans.begin(), spans.end());
    for (size_t i = 1; i < spans.size(); ++i)
        if (spans[i].first < spans[i - 1].first + spans[i - 1].second)
            fail(path, "overlapping payload offsets");

    for (const Entry& e : entries) {
        if (out.store.tensors.count(e.name)) fail(path, "duplicate tensor name " + e.name);
        Tensor t;
        t.shape = e.shape;
        t.dtype = e.dtype;
        t.channel_axis = e.channel_axis;
        const auto count = static_cast<size_t>(t.count());
        if (e.data_len != count * dtype_bytes(e.dtype))
            fail(path, "tensor " + e.name + " length mismatch");
        const uint8_t* data = bytes.data() + payload_base + e.data_off;
        switch (e.dtype) {
            case Dtype::f32: {
                t.f32.resize(count);
                for (size_t i = 0; i < count; ++i) {
                    uint32_t v = 0;
                    std::memcpy(&v, data + i * 4, 4);
                    t.f32[i] = std::bit_cast<float>(v);
                }
                break;
            }
            case Dtype::bf16: {
                t.f32.resize(count);
                for (size_t i = 0; i < count; ++i) {
                    const uint32_t v = static_cast<uint32_t>(data[i * 2]) |
                                       (static_cast<uint32_t>(data[i * 2 + 1]) << 8);
                    t.f32[i] = std::bit_cast<float>(v << 16);
                }
                break;
            }
            case Dtype::i8: {
                if (e.qspec_off == kNoOffset)
                    fail(path, "i8 tensor " + e.name + " is missing its quant spec");
                Reader qr{path, bytes, payload_base + e.qspec_off};
                t.qspec = read_qspec(qr);
                if (t.qspec.per_channel()) {
                    if (t.qspec.channel_axis >= static_cast<int>(t.shape.size()) ||
                        static_cast<int>(t.qspec.scale.size()) !=
                            t.shape[static_cast<size_t>(t.qspec.channel_axis)])
                        fail(path, "tensor " + e.name + " quant spec does not match its shape");
                }
                t.i8.resize(count);
                std::memcpy(t.i8.data(), data, count);
                QuantizedTensor q;
                q.data = t.i8;
                q.shape = t.shape;
                q.spec = t.qspec;
                t.f32 = dequantize(q);
                break;
            }
        }
        out.store.tensors.emplace(e.name, std::move(t));
    }
    return out;
}

WeightStore pack_weights(const WeightStore& store, const PrecisionPlan& plan) {
    WeightStore out;
    for (const auto& [name, tensor] : store.tensors) {
        const Precision prec = plan.at(layer_of(name));
        Tensor t;
        t.shape = tensor.shape;
        t.channel_axis = tensor.channel_axis;
        const std::string leaf = name.substr(name.rfind('.') + 1);
        const bool is_weight = !leaf.empty() && leaf[0] == 'w';
        if (prec == Precision::int8 && is_weight) {
            t.dtype = Dtype::i8;
            t.qspec = weight_spec(tensor.f32, tensor.shape, tensor.channel_axis);
            QuantizedTensor q = quantize(tensor.f32, tensor.shape, t.qspec);
            t.i8 = std::move(q.data);
            QuantizedTensor qd;
            qd.data = t.i8;
            qd.shape = t.shape;
            qd.spec = t.qspec;
            t.f32 = dequantize(qd);
        } else if (prec == Precision::bf16) {
            t.dtype = Dtype::bf16;
            t.f32.resize(tensor.f32.size());
            bf16_round(tensor.f32, t.f32);
        } else {
            t.dtype = Dtype::f32;
            t.f32 = tensor.f32;
        }
        out.tensors.emplace(name, std::move(t));
    }
    return out;
}

}  // namespace naw
