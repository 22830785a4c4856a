#pragma once

#include "nfbsm/errors.hpp"
#include "nfbsm/experiment.hpp"
#include "nfbsm/field.hpp"
#include "nfbsm/grid.hpp"
#include "nfbsm/hrtf.hpp"
#include "nfbsm/matching.hpp"
#include "nfbsm/sphmath.hpp"
#include "nfbsm/text.hpp"
