// Umbrella header.
#pragma once

#include "mdgmix/pipeline.hpp"
