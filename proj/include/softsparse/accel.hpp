#pragma once

// Behavioral model of the conv_approx accelerator: a 4x4 input window is
// fetched word by word, convolved with a resident 3x3 kernel and reduced to
// a 2x2 output, pruning products through the MSB proxy. One step() is one
// clock cycle.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "softsparse/msb.hpp"
#include "softsparse/prune.hpp"

namespace softsparse::accel {

inline constexpr std::size_t kWindowSide = 4;
inline constexpr std::size_t kWindowWords = kWindowSide * kWindowSide;
inline constexpr std::size_t kKernelSide = 3;
inline constexpr std::size_t kKernelTaps = kKernelSide * kKernelSide;
inline constexpr std::size_t kOutputs = 4;
/// GET_DATA (one word per cycle) + STAGE_1 + STAGE_2 + STAGE_3.
inline constexpr std::size_t kCyclesToDone = kWindowWords + 3;

enum class AccelState { Idle, GetData, Stage1, Stage2, Stage3, Done };

std::string_view to_string(AccelState s);

/// IDLE->GET_DATA->STAGE_1->STAGE_2->STAGE_3->DONE->IDLE, plus the
/// GET_DATA and DONE self-loops.
bool is_legal_transition(AccelState from, AccelState to);

struct KernelRegister {
    std::array<std::int32_t, kKernelTaps> coeffs{};
    std::array<MsbMagnitude, kKernelTaps> msbs{};
};

/// Coefficients plus their precomputed MSBs.
KernelRegister load_kernel(std::span<const std::int32_t, kKernelTaps> coeffs);

/// Word-addressed read port.
class WordMemory {
public:
    virtual ~WordMemory() = default;
    virtual std::int32_t read_word(std::uint32_t addr) const = 0;
};

class VectorMemory final : public WordMemory {
public:
    explicit VectorMemory(std::vector<std::int32_t> words) : words_(std::move(words)) {}
    std::int32_t read_word(std::uint32_t addr) const override;

private:
    std::vector<std::int32_t> words_;
};

/// Operands of the custom instruction: rs2 carries the base address, rs1 the
/// word count (always 16 for the 4x4 window).
struct AccelRequest {
    std::uint32_t base_addr = 0;
    std::uint32_t size = kWindowWords;
};

enum class RecordKind {
    Issue,
    Fetch,
    Msb,
    Reduce,
    Product,
    Accumulate,
    Done,
    Stall,
    Acknowledge,
};

std::string_view to_string(RecordKind k);

/// One line of the cycle trace. Fields that do not apply stay empty.
struct TraceRecord {
    RecordKind kind = RecordKind::Issue;
    std::optional<int> output; // 0..3 for y0..y3
    std::optional<int> index;  // window word, or kernel tap in (r, s) order
    std::optional<std::uint32_t> addr;
    std::optional<std::int32_t> x;
    std::optional<std::int32_t> w;
    std::optional<MsbMagnitude> msb;
    std::optional<ProductMagnitude> magnitude;
    std::optional<ProductMagnitude> msb_max;
    std::optional<int> delta;
    std::optional<bool> kept;
    std::optional<int> threshold; // t_int captured at issue
    std::optional<std::int64_t> value; // fetched word, product or output sum
};

struct TraceEvent {
    std::uint64_t cycle = 0;
    AccelState state = AccelState::Idle; // state during this cycle
    AccelState next = AccelState::Idle;  // state after the clock edge
    std::vector<TraceRecord> records;
};

struct RunHandle {
    std::uint64_t id = 0;
};

struct StepResult {
    AccelState state; // state after the step
    std::optional<TraceEvent> event;
};

class ConvAccelerator {
public:
    /// Only allowed while IDLE.
    const KernelRegister& load_kernel(std::span<const std::int32_t, kKernelTaps> coeffs);

    /// Captures the request in IDLE and moves to GET_DATA. `memory` must
    /// outlive the run. Throws StateError when busy or without a kernel and
    /// DomainError when size != 16.
    RunHandle issue(const AccelRequest& request, const WordMemory& memory,
                    const PruneThreshold& threshold);

    /// Advances one clock cycle. In DONE the FSM holds and emits a stall
    /// record until acknowledged.
    StepResult step(RunHandle handle);

    /// Steps until DONE is reached; returns the number of cycles taken.
    std::size_t run_until_done(RunHandle handle);

    /// y0..y3 in row-major order of the 2x2 output. Throws StateError unless
    /// DONE and OverflowError if a sum exceeds the 32-bit output register.
    std::array<std::int32_t, kOutputs> read_outputs(RunHandle handle) const;

    /// DONE -> IDLE; clears the window, MSB and product buffers.
    void acknowledge(RunHandle handle);

    AccelState state() const { return state_; }
    std::uint64_t cycle() const { return cycle_; }
    /// Status word written back to the destination register: 1 once the run
    /// is DONE, 0 otherwise.
    std::int32_t result_register() const { return state_ == AccelState::Done ? 1 : 0; }
    const std::optional<KernelRegister>& kernel() const { return kernel_; }
    /// Events of the current (or last) run, from issue onwards.
    const std::vector<TraceEvent>& trace() const { return trace_; }

private:
    void check_handle(RunHandle handle) const;
    TraceEvent begin_event(AccelState next) const;
    void do_fetch(TraceEvent& ev);
    void do_stage1(TraceEvent& ev);
    void do_stage2(TraceEvent& ev);
    void do_stage3(TraceEvent& ev);
    void clear_buffers();

    AccelState state_ = AccelState::Idle;
    std::uint64_t cycle_ = 0;
    std::uint64_t run_id_ = 0;
    std::optional<KernelRegister> kernel_;

    // Captured instruction parameters.
    const WordMemory* memory_ = nullptr;
    AccelRequest request_{};
    int t_int_ = 1;

    std::array<std::int32_t, kWindowWords> window_{};
    std::array<MsbMagnitude, kWindowWords> window_msbs_{};
    std::size_t fetched_ = 0;
    std::array<std::array<std::int64_t, kKernelTaps>, kOutputs> products_{};
    std::array<std::array<bool, kKernelTaps>, kOutputs> kept_{};
    std::array<std::int64_t, kOutputs> outputs_{};

    std::vector<TraceEvent> trace_;
};

/// Writes one JSON object per trace record (JSON Lines). Field names:
/// cycle, state, next, kind, output, index, addr, x, w, msb, m, msb_max,
/// delta, kept, threshold, value. "zero" stands for the Zero MSB sentinel.
void write_trace_jsonl(std::ostream& os, const std::vector<TraceEvent>& trace);

} // namespace softsparse::accel
