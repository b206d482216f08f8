#pragma once

#include "pltf/config.hpp"
#include "pltf/contract.hpp"
#include "pltf/coo.hpp"
#include "pltf/errors.hpp"
#include "pltf/eval.hpp"
#include "pltf/inference.hpp"
#include "pltf/io.hpp"
#include "pltf/model.hpp"
#include "pltf/rng.hpp"
#include "pltf/special.hpp"
#include "pltf/tensor.hpp"
