#pragma once

#include "advparams/attacks.hpp"
#include "advparams/checkpoint.hpp"
#include "advparams/data.hpp"
#include "advparams/encrypt.hpp"
#include "advparams/keystore.hpp"
#include "advparams/metrics.hpp"
#include "advparams/network.hpp"
#include "advparams/nn.hpp"
#include "advparams/tensor.hpp"
#include "advparams/train.hpp"
