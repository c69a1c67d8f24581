#pragma once

#include "xuq/common.hpp"
#include "xuq/rng.hpp"
#include "xuq/linalg.hpp"
#include "xuq/parallel.hpp"
#include "xuq/dataset.hpp"
#include "xuq/models.hpp"
#include "xuq/explainers.hpp"
#include "xuq/geometry.hpp"
#include "xuq/mvg.hpp"
#include "xuq/uncertainty.hpp"
#include "xuq/analysis.hpp"
