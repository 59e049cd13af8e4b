#pragma once

#include <stdexcept>
#include <string>

namespace qtframe {

// Every failure carries a stable kind tag; the CLI maps input-class errors to exit 2
// and everything else to exit 1.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what, bool input = false)
        : std::runtime_error(kind + ": " + what), kind_(std::move(kind)), input_(input) {}
    const std::string& kind() const { return kind_; }
    bool is_input_error() const { return input_; }

private:
    std::string kind_;
    bool input_;
};

#define QTF_ERROR(Name, Input)                                                 \
    struct Name : Error {                                                      \
        explicit Name(const std::string& w) : Error(#Name, w, Input) {}        \
    };

QTF_ERROR(InputError, true)
QTF_ERROR(ShapeMismatch, true)
QTF_ERROR(DimensionMismatch, true)
QTF_ERROR(FieldMismatch, true)
QTF_ERROR(NotExpanding, true)
QTF_ERROR(Singular, true)
QTF_ERROR(DivisionByZero, false)
QTF_ERROR(DetNotMonomial, false)
QTF_ERROR(NotDivisible, false)
QTF_ERROR(UnsupportedRootOfUnity, false)
QTF_ERROR(EigenNotSimple, false)
QTF_ERROR(DegenerateMomentSystem, false)
QTF_ERROR(NoLeftEigenvector, false)
QTF_ERROR(ZeroNormAtOrigin, false)
QTF_ERROR(ZeroAtOrigin, false)
QTF_ERROR(NormalizationBroken, false)
QTF_ERROR(MomentSpecialFails, false)
QTF_ERROR(InsufficientVanishing, false)
QTF_ERROR(InsufficientBalancedVanishing, false)
QTF_ERROR(FieldLacksSqrtR, false)
QTF_ERROR(FieldLacksSqrtDM, false)
QTF_ERROR(JetConditionFailed, false)
QTF_ERROR(IdentityCheckFailed, false)

#undef QTF_ERROR

// Wraps a sub-error with the pipeline stage it came from.
class StageError : public Error {
public:
    StageError(const std::string& stage, const Error& inner)
        : Error(inner.kind(), "[" + stage + "] " + inner.what(), inner.is_input_error()), stage_(stage) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

}  // namespace qtframe
