#include "softsparse/accel.hpp"

#include <algorithm>
#include <limits>
#include <ostream>

#include <json.hpp>

#include "softsparse/error.hpp"

namespace softsparse::accel {

namespace {

constexpr int kZero = -1;

// Pairwise max tree over the 9 magnitude sums of one output.
int reduce_max(std::array<int, kKernelTaps> level) {
    std::size_t n = level.size();
    while (n > 1) {
        const std::size_t half = (n + 1) / 2;
        for (std::size_t i = 0; i < n / 2; ++i) {
            level[i] = std::max(level[2 * i], level[2 * i + 1]);
        }
        if (n % 2 == 1) {
            level[n / 2] = level[n - 1];
        }
        n = half;
    }
    return level[0];
}

int raw(MsbMagnitude m) { return m.is_zero() ? kZero : m.position(); }

} // namespace

std::string_view to_string(AccelState s) {
    switch (s) {
    case AccelState::Idle: return "IDLE";
    case AccelState::GetData: return "GET_DATA";
    case AccelState::Stage1: return "STAGE_1";
    case AccelState::Stage2: return "STAGE_2";
    case AccelState::Stage3: return "STAGE_3";
    case AccelState::Done: return "DONE";
    }
    return "?";
}

std::string_view to_string(RecordKind k) {
    switch (k) {
    case RecordKind::Issue: return "issue";
    case RecordKind::Fetch: return "fetch";
    case RecordKind::Msb: return "msb";
    case RecordKind::Reduce: return "reduce";
    case RecordKind::Product: return "product";
    case RecordKind::Accumulate: return "accumulate";
    case RecordKind::Done: return "done";
    case RecordKind::Stall: return "stall";
    case RecordKind::Acknowledge: return "acknowledge";
    }
    return "?";
}

bool is_legal_transition(AccelState from, AccelState to) {
    switch (from) {
    case AccelState::Idle: return to == AccelState::GetData;
    case AccelState::GetData: return to == AccelState::GetData || to == AccelState::Stage1;
    case AccelState::Stage1: return to == AccelState::Stage2;
    case AccelState::Stage2: return to == AccelState::Stage3;
    case AccelState::Stage3: return to == AccelState::Done;
    case AccelState::Done: return to == AccelState::Done || to == AccelState::Idle;
    }
    return false;
}

KernelRegister load_kernel(std::span<const std::int32_t, kKernelTaps> coeffs) {
    KernelRegister k;
    for (std::size_t i = 0; i < kKernelTaps; ++i) {
        k.coeffs[i] = coeffs[i];
        k.msbs[i] = msb_pos(coeffs[i]);
    }
    return k;
}

std::int32_t VectorMemory::read_word(std::uint32_t addr) const {
    if (addr >= words_.size()) {
        throw Error("memory read at word address " + std::to_string(addr) + " out of range");
    }
    return words_[addr];
}

const KernelRegister& ConvAccelerator::load_kernel(std::span<const std::int32_t, kKernelTaps> coeffs) {
    if (state_ != AccelState::Idle) {
        throw StateError("kernel can only be loaded while IDLE");
    }
    kernel_ = accel::load_kernel(coeffs);
    return *kernel_;
}

RunHandle ConvAccelerator::issue(const AccelRequest& request, const WordMemory& memory,
                                 const PruneThreshold& threshold) {
    if (state_ != AccelState::Idle) {
        throw StateError(std::string("accelerator busy in state ") + std::string(to_string(state_)));
    }
    if (!kernel_) {
        throw StateError("no kernel loaded");
    }
    if (request.size != kWindowWords) {
        throw DomainError("conv_approx request size must be 16 words, got " +
                          std::to_string(request.size));
    }
    ++run_id_;
    memory_ = &memory;
    request_ = request;
    t_int_ = threshold.t_int();
    clear_buffers();
    trace_.clear();

    TraceEvent ev = begin_event(AccelState::GetData);
    TraceRecord rec;
    rec.kind = RecordKind::Issue;
    rec.addr = request.base_addr;
    rec.value = request.size;
    rec.threshold = t_int_;
    ev.records.push_back(rec);
    trace_.push_back(std::move(ev));
    state_ = AccelState::GetData;
    ++cycle_;
    return RunHandle{run_id_};
}

void ConvAccelerator::check_handle(RunHandle handle) const {
    if (handle.id == 0 || handle.id != run_id_) {
        throw StateError("stale or unknown run handle");
    }
}

TraceEvent ConvAccelerator::begin_event(AccelState next) const {
    TraceEvent ev;
    ev.cycle = cycle_;
    ev.state = state_;
    ev.next = next;
    return ev;
}

void ConvAccelerator::do_fetch(TraceEvent& ev) {
    const std::uint32_t addr = request_.base_addr + static_cast<std::uint32_t>(fetched_);
    const std::int32_t word = memory_->read_word(addr);
    window_[fetched_] = word;
    TraceRecord rec;
    rec.kind = RecordKind::Fetch;
    rec.index = static_cast<int>(fetched_);
    rec.addr = addr;
    rec.value = word;
    ev.records.push_back(rec);
    ++fetched_;
}

void ConvAccelerator::do_stage1(TraceEvent& ev) {
    for (std::size_t i = 0; i < kWindowWords; ++i) {
        window_msbs_[i] = msb_pos(window_[i]);
        TraceRecord rec;
        rec.kind = RecordKind::Msb;
        rec.index = static_cast<int>(i);
        rec.x = window_[i];
        rec.msb = window_msbs_[i];
        ev.records.push_back(rec);
    }
}

void ConvAccelerator::do_stage2(TraceEvent& ev) {
    const KernelRegister& k = *kernel_;
    for (std::size_t o = 0; o < kOutputs; ++o) {
        const std::size_t oy = o / 2;
        const std::size_t ox = o % 2;
        std::array<int, kKernelTaps> m{};
        std::array<std::size_t, kKernelTaps> src{};
        for (std::size_t t = 0; t < kKernelTaps; ++t) {
            src[t] = (oy + t / kKernelSide) * kWindowSide + ox + t % kKernelSide;
            const int mx = raw(window_msbs_[src[t]]);
            const int mw = raw(k.msbs[t]);
            m[t] = (mx == kZero || mw == kZero) ? kZero : mx + mw;
        }
        const int msb_max = reduce_max(m);
        const ProductMagnitude max_mag =
            msb_max == kZero ? ProductMagnitude::zero() : ProductMagnitude::at(msb_max);
        TraceRecord red;
        red.kind = RecordKind::Reduce;
        red.output = static_cast<int>(o);
        red.msb_max = max_mag;
        ev.records.push_back(red);

        for (std::size_t t = 0; t < kKernelTaps; ++t) {
            // Evaluate only when M_i + T > MSB_max; ties at delta == T are suppressed.
            const bool keep = m[t] != kZero && m[t] + t_int_ > msb_max;
            kept_[o][t] = keep;
            products_[o][t] = keep ? static_cast<std::int64_t>(window_[src[t]]) * k.coeffs[t] : 0;

            TraceRecord rec;
            rec.kind = RecordKind::Product;
            rec.output = static_cast<int>(o);
            rec.index = static_cast<int>(t);
            rec.x = window_[src[t]];
            rec.w = k.coeffs[t];
            rec.magnitude = m[t] == kZero ? ProductMagnitude::zero() : ProductMagnitude::at(m[t]);
            rec.msb_max = max_mag;
            if (m[t] != kZero) {
                rec.delta = msb_max - m[t];
            }
            rec.kept = keep;
            if (keep) {
                rec.value = products_[o][t];
            }
            ev.records.push_back(rec);
        }
    }
}

void ConvAccelerator::do_stage3(TraceEvent& ev) {
    for (std::size_t o = 0; o < kOutputs; ++o) {
        std::int64_t acc = 0;
        for (std::size_t t = 0; t < kKernelTaps; ++t) {
            if (kept_[o][t]) {
                acc += products_[o][t];
            }
        }
        outputs_[o] = acc;
        TraceRecord rec;
        rec.kind = RecordKind::Accumulate;
        rec.output = static_cast<int>(o);
        rec.value = acc;
        ev.records.push_back(rec);
    }
    TraceRecord done;
    done.kind = RecordKind::Done;
    ev.records.push_back(done);
}

StepResult ConvAccelerator::step(RunHandle handle) {
    check_handle(handle);
    if (state_ == AccelState::Idle) {
        throw StateError("no conv_approx run in progress");
    }
    AccelState next = state_;
    switch (state_) {
    case AccelState::GetData:
        next = fetched_ + 1 == kWindowWords ? AccelState::Stage1 : AccelState::GetData;
        break;
    case AccelState::Stage1: next = AccelState::Stage2; break;
    case AccelState::Stage2: next = AccelState::Stage3; break;
    case AccelState::Stage3: next = AccelState::Done; break;
    case AccelState::Done: next = AccelState::Done; break;
    case AccelState::Idle: break;
    }

    TraceEvent ev = begin_event(next);
    switch (state_) {
    case AccelState::GetData: do_fetch(ev); break;
    case AccelState::Stage1: do_stage1(ev); break;
    case AccelState::Stage2: do_stage2(ev); break;
    case AccelState::Stage3: do_stage3(ev); break;
    case AccelState::Done: {
        TraceRecord rec;
        rec.kind = RecordKind::Stall;
        ev.records.push_back(rec);
        break;
    }
    case AccelState::Idle: break;
    }
    state_ = next;
    ++cycle_;
    trace_.push_back(ev);
    return StepResult{state_, std::move(ev)};
}

std::size_t ConvAccelerator::run_until_done(RunHandle handle) {
    std::size_t cycles = 0;
    while (state_ != AccelState::Done) {
        step(handle);
        ++cycles;
    }
    return cycles;
}

std::array<std::int32_t, kOutputs> ConvAccelerator::read_outputs(RunHandle handle) const {
    check_handle(handle);
    if (state_ != AccelState::Done) {
        throw StateError(std::string("outputs not ready in state ") + std::string(to_string(state_)));
    }
    std::array<std::int32_t, kOutputs> y{};
    for (std::size_t o = 0; o < kOutputs; ++o) {
        if (outputs_[o] > std::numeric_limits<std::int32_t>::max() ||
            outputs_[o] < std::numeric_limits<std::int32_t>::min()) {
            throw OverflowError("output y" + std::to_string(o) + " = " + std::to_string(outputs_[o]) +
                                " overflows the 32-bit output register");
        }
        y[o] = static_cast<std::int32_t>(outputs_[o]);
    }
    return y;
}

void ConvAccelerator::acknowledge(RunHandle handle) {
    check_handle(handle);
    if (state_ != AccelState::Done) {
        throw StateError(std::string("acknowledge requires DONE, state is ") +
                         std::string(to_string(state_)));
    }
    TraceEvent ev = begin_event(AccelState::Idle);
    TraceRecord rec;
    rec.kind = RecordKind::Acknowledge;
    ev.records.push_back(rec);
    trace_.push_back(std::move(ev));
    clear_buffers();
    memory_ = nullptr;
    state_ = AccelState::Idle;
    ++cycle_;
}

void ConvAccelerator::clear_buffers() {
    window_.fill(0);
    window_msbs_.fill(MsbMagnitude::zero());
    fetched_ = 0;
    for (auto& p : products_) p.fill(0);
    for (auto& k : kept_) k.fill(false);
    outputs_.fill(0);
}

void write_trace_jsonl(std::ostream& os, const std::vector<TraceEvent>& trace) {
    auto mag = [](const auto& m) -> nlohmann::json {
        if (m.is_zero()) return "zero";
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, MsbMagnitude>) {
            return m.position();
        } else {
            return m.sum();
        }
    };
    for (const auto& ev : trace) {
        for (const auto& r : ev.records) {
            nlohmann::ordered_json j;
            j["cycle"] = ev.cycle;
            j["state"] = to_string(ev.state);
            j["next"] = to_string(ev.next);
            j["kind"] = to_string(r.kind);
            if (r.output) j["output"] = *r.output;
            if (r.index) j["index"] = *r.index;
            if (r.addr) j["addr"] = *r.addr;
            if (r.x) j["x"] = *r.x;
            if (r.w) j["w"] = *r.w;
            if (r.msb) j["msb"] = mag(*r.msb);
            if (r.magnitude) j["m"] = mag(*r.magnitude);
            if (r.msb_max) j["msb_max"] = mag(*r.msb_max);
            if (r.delta) j["delta"] = *r.delta;
            if (r.kept) j["kept"] = *r.kept;
            if (r.threshold) j["threshold"] = *r.threshold;
            if (r.value) j["value"] = *r.value;
            os << j.dump() << '\n';
        }
    }
}

} // namespace softsparse::accel
