#pragma once

#include "marss2l/band_stack.hpp"
#include "marss2l/benchmark.hpp"
#include "marss2l/detector.hpp"
#include "marss2l/evaluation.hpp"
#include "marss2l/model_io.hpp"
#include "marss2l/plume_sim.hpp"
#include "marss2l/raster.hpp"
#include "marss2l/report.hpp"
#include "marss2l/retrieval.hpp"
#include "marss2l/sampler.hpp"
#include "marss2l/scene_analysis.hpp"
#include "marss2l/site.hpp"
#include "marss2l/spectral.hpp"
#include "marss2l/synthetic.hpp"
#include "marss2l/time.hpp"
