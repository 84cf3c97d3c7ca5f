#pragma once

#include "analysis.hpp"
#include "carrier.hpp"
#include "conditioning.hpp"
#include "filter.hpp"
#include "io.hpp"
#include "isserlis.hpp"
#include "lockin.hpp"
#include "lorentzian.hpp"
#include "mechsim.hpp"
#include "params.hpp"
#include "pipeline.hpp"
#include "rng.hpp"
#include "sensitivity.hpp"
#include "spectrum.hpp"
#include "transducer.hpp"
