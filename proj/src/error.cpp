#include "sforge/error.hpp"

namespace sforge {

std::string_view errc_name(Errc code) noexcept {
    switch (code) {
        case Errc::EmptyInput: return "EmptyInput";
        case Errc::NonFinite: return "NonFinite";
        case Errc::KOutOfRange: return "KOutOfRange";
        case Errc::ManifestMismatch: return "ManifestMismatch";
        case Errc::NonFiniteWeight: return "NonFiniteWeight";
        case Errc::DuplicateName: return "DuplicateName";
        case Errc::InvalidName: return "InvalidName";
        case Errc::AsymmetricGram: return "AsymmetricGram";
        case Errc::CalibMismatch: return "CalibMismatch";
        case Errc::PopcountMismatch: return "PopcountMismatch";
        case Errc::UnknownUnit: return "UnknownUnit";
        case Errc::DimMismatch: return "DimMismatch";
        case Errc::SingularHessian: return "SingularHessian";
        case Errc::MissingGram: return "MissingGram";
        case Errc::NonFiniteActivation: return "NonFiniteActivation";
        case Errc::NegativeScore: return "NegativeScore";
        case Errc::EmptyLayer: return "EmptyLayer";
        case Errc::AllZeroUnimportance: return "AllZeroUnimportance";
        case Errc::InfeasibleBudget: return "InfeasibleBudget";
        case Errc::CoverageGap: return "CoverageGap";
        case Errc::GroupSizeMismatch: return "GroupSizeMismatch";
        case Errc::InvalidConfig: return "InvalidConfig";
        case Errc::UnsupportedTopology: return "UnsupportedTopology";
        case Errc::TopologyMismatch: return "TopologyMismatch";
        case Errc::InvalidArgument: return "InvalidArgument";
        case Errc::FormatError: return "FormatError";
        case Errc::IoError: return "IoError";
        case Errc::FileExists: return "FileExists";
    }
    return "Unknown";
}

}  // namespace sforge
