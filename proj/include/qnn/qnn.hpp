#pragma once

#include "qnn/complexity.hpp"
#include "qnn/error.hpp"
#include "qnn/executor.hpp"
#include "qnn/filter.hpp"
#include "qnn/graph.hpp"
#include "qnn/intra.hpp"
#include "qnn/kernels.hpp"
#include "qnn/model_io.hpp"
#include "qnn/plane.hpp"
#include "qnn/quantize.hpp"
#include "qnn/reference_models.hpp"
#include "qnn/sparse.hpp"
#include "qnn/stn1.hpp"
#include "qnn/tensor.hpp"
