#pragma once

#include "jocor/adam.hpp"
#include "jocor/config.hpp"
#include "jocor/data.hpp"
#include "jocor/dataset.hpp"
#include "jocor/error.hpp"
#include "jocor/experiment.hpp"
#include "jocor/losses.hpp"
#include "jocor/matrix.hpp"
#include "jocor/mlp.hpp"
#include "jocor/noise.hpp"
#include "jocor/random.hpp"
#include "jocor/report.hpp"
#include "jocor/trainers.hpp"
