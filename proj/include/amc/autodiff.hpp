#pragma once

#include "amc/autodiff/checkpoint.hpp"
#include "amc/autodiff/grad_check.hpp"
#include "amc/autodiff/layers.hpp"
#include "amc/autodiff/tensor.hpp"
