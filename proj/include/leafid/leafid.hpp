#pragma once

#include "leafid/classifier.hpp"
#include "leafid/color_features.hpp"
#include "leafid/error.hpp"
#include "leafid/features.hpp"
#include "leafid/harness.hpp"
#include "leafid/image.hpp"
#include "leafid/imaging.hpp"
#include "leafid/io.hpp"
#include "leafid/pft.hpp"
#include "leafid/shape_features.hpp"
#include "leafid/texture_features.hpp"
#include "leafid/vein_features.hpp"
