#pragma once

#include "sidewalk/bundle.hpp"
#include "sidewalk/errors.hpp"
#include "sidewalk/evalkit.hpp"
#include "sidewalk/image_io.hpp"
#include "sidewalk/latentprep.hpp"
#include "sidewalk/nn.hpp"
#include "sidewalk/ocsvm.hpp"
#include "sidewalk/pipeline.hpp"
#include "sidewalk/synth.hpp"
#include "sidewalk/tensor.hpp"
#include "sidewalk/vae.hpp"
#include "sidewalk/workflow.hpp"
