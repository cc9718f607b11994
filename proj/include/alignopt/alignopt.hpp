// SPDX-License-Identifier: Apache-2.0
// Umbrella header.
#pragma once

#include "alignopt/instances.hpp"
#include "alignopt/oracles.hpp"
#include "alignopt/tai.hpp"
#include "alignopt/embed.hpp"
#include "alignopt/tensor.hpp"
#include "alignopt/model.hpp"
#include "alignopt/pretrain.hpp"
#include "alignopt/finetune.hpp"
#include "alignopt/report.hpp"
#include "alignopt/cli.hpp"
