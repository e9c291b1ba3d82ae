#pragma once

#include "pprs/errors.hpp"
#include "pprs/random.hpp"
#include "pprs/image.hpp"
#include "pprs/numerics.hpp"
#include "pprs/segmentation.hpp"
#include "pprs/slic.hpp"
#include "pprs/felzenszwalb.hpp"
#include "pprs/quickshift.hpp"
#include "pprs/scheme.hpp"
#include "pprs/classifiers.hpp"
#include "pprs/certification.hpp"
#include "pprs/evaluation.hpp"
