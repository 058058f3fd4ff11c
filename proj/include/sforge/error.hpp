#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sforge {

/// Named failure kinds. The CLI prints them as `ERROR <Code>: <detail>`.
enum class Errc {
    EmptyInput,
    NonFinite,
    KOutOfRange,
    ManifestMismatch,
    NonFiniteWeight,
    DuplicateName,
    InvalidName,
    AsymmetricGram,
    CalibMismatch,
    PopcountMismatch,
    UnknownUnit,
    DimMismatch,
    SingularHessian,
    MissingGram,
    NonFiniteActivation,
    NegativeScore,
    EmptyLayer,
    AllZeroUnimportance,
    InfeasibleBudget,
    CoverageGap,
    GroupSizeMismatch,
    InvalidConfig,
    UnsupportedTopology,
    TopologyMismatch,
    InvalidArgument,
    FormatError,
    IoError,
    FileExists,
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& detail)
        : std::runtime_error(detail), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& detail) {
    throw Error(code, detail);
}

}  // namespace sforge
