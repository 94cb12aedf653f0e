#pragma once

#include "omseg/commands.hpp"
#include "omseg/config.hpp"
#include "omseg/dataset.hpp"
#include "omseg/errors.hpp"
#include "omseg/evaluate.hpp"
#include "omseg/image.hpp"
#include "omseg/layers.hpp"
#include "omseg/loss.hpp"
#include "omseg/metrics.hpp"
#include "omseg/optim.hpp"
#include "omseg/overlay.hpp"
#include "omseg/phantom.hpp"
#include "omseg/preprocess.hpp"
#include "omseg/report.hpp"
#include "omseg/resample.hpp"
#include "omseg/rng.hpp"
#include "omseg/tensor.hpp"
#include "omseg/train.hpp"
#include "omseg/unet.hpp"
#include "omseg/volume.hpp"
#include "omseg/volume_io.hpp"
