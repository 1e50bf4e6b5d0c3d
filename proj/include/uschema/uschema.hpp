#pragma once

// Universal-schema relation prediction: matrix completion over observed
// (relation, entity-pair) facts with latent-feature, neighborhood and
// entity scoring components, trained with a pairwise ranking objective.

#include "uschema/error.hpp"
#include "uschema/evaluation.hpp"
#include "uschema/fact_store.hpp"
#include "uschema/model_io.hpp"
#include "uschema/rng.hpp"
#include "uschema/scoring.hpp"
#include "uschema/text.hpp"
#include "uschema/training.hpp"
#include "uschema/verification.hpp"
