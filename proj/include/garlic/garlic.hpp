#pragma once

#include "garlic/config.hpp"
#include "garlic/core.hpp"
#include "garlic/errors.hpp"
#include "garlic/eval.hpp"
#include "garlic/hyperparams.hpp"
#include "garlic/index.hpp"
#include "garlic/index_io.hpp"
#include "garlic/init.hpp"
#include "garlic/io.hpp"
#include "garlic/losses.hpp"
#include "garlic/normalize.hpp"
#include "garlic/parallel.hpp"
#include "garlic/pipeline.hpp"
#include "garlic/query.hpp"
#include "garlic/refinement.hpp"
#include "garlic/training.hpp"
