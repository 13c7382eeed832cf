#pragma once

#include <stdexcept>
#include <string>

namespace volaxiom {

// Every library failure carries a stable machine-readable code so the CLI can
// emit it as JSON without parsing messages.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& what)
        : std::runtime_error(what), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

#define VOLAXIOM_DEFINE_ERROR(Name)                                   \
    class Name : public Error {                                      \
    public:                                                          \
        explicit Name(const std::string& what) : Error(#Name, what) {} \
    }

VOLAXIOM_DEFINE_ERROR(InvalidArgument);
VOLAXIOM_DEFINE_ERROR(NegativeVariance);
VOLAXIOM_DEFINE_ERROR(GridMismatch);
VOLAXIOM_DEFINE_ERROR(InvalidBounds);
VOLAXIOM_DEFINE_ERROR(MaxIterationsExceeded);
VOLAXIOM_DEFINE_ERROR(ProjectionFailure);
VOLAXIOM_DEFINE_ERROR(EmptyInput);
VOLAXIOM_DEFINE_ERROR(TrainingDegenerate);
VOLAXIOM_DEFINE_ERROR(InsufficientData);
VOLAXIOM_DEFINE_ERROR(WindowLengthMismatch);
VOLAXIOM_DEFINE_ERROR(ActionOutOfBounds);
VOLAXIOM_DEFINE_ERROR(DivergenceDetected);
VOLAXIOM_DEFINE_ERROR(NoCheckpoints);
VOLAXIOM_DEFINE_ERROR(InconsistentPenaltyKind);
VOLAXIOM_DEFINE_ERROR(UnknownSubcommand);
VOLAXIOM_DEFINE_ERROR(ConfigParse);
VOLAXIOM_DEFINE_ERROR(MissingArtifact);
VOLAXIOM_DEFINE_ERROR(FormatError);

#undef VOLAXIOM_DEFINE_ERROR

} // namespace volaxiom
