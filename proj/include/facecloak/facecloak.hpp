#pragma once

#include "facecloak/alpha_cloak.hpp"
#include "facecloak/cascade_detector.hpp"
#include "facecloak/cascade_model.hpp"
#include "facecloak/detector_clients.hpp"
#include "facecloak/disguise_search.hpp"
#include "facecloak/errors.hpp"
#include "facecloak/image.hpp"
#include "facecloak/png_io.hpp"
#include "facecloak/report.hpp"
#include "facecloak/rng.hpp"
#include "facecloak/shapes.hpp"
