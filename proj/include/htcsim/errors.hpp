#pragma once

#include <stdexcept>
#include <string>

namespace htcsim {

/// Base for every error the simulator raises on purpose.
struct SimError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PastEvent : SimError { using SimError::SimError; };
struct UnknownMetric : SimError { using SimError::SimError; };
struct TooLarge : SimError { using SimError::SimError; };
struct EmptyWindow : SimError { using SimError::SimError; };
struct CredentialExpired : SimError { using SimError::SimError; };
struct CacheFull : SimError { using SimError::SimError; };
struct EmptyPlan : SimError { using SimError::SimError; };
struct InvalidSpec : SimError { using SimError::SimError; };
struct UnknownPreset : SimError { using SimError::SimError; };
struct IoError : SimError { using SimError::SimError; };

/// An internal consistency check failed. Never expected on a correct run;
/// the CLI maps it to exit code 3.
struct InvariantViolation : SimError { using SimError::SimError; };
struct DuplicateCompletion : InvariantViolation { using InvariantViolation::InvariantViolation; };

}  // namespace htcsim
