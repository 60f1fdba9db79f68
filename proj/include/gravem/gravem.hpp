#pragma once

#include "gravem/calibrate.hpp"
#include "gravem/config.hpp"
#include "gravem/density.hpp"
#include "gravem/design.hpp"
#include "gravem/emulator.hpp"
#include "gravem/error.hpp"
#include "gravem/flux.hpp"
#include "gravem/hash.hpp"
#include "gravem/io.hpp"
#include "gravem/model.hpp"
#include "gravem/parallel.hpp"
#include "gravem/rng.hpp"
#include "gravem/summaries.hpp"
#include "gravem/synthetic.hpp"
