#pragma once

#include "sflash/grid.hpp"
#include "sflash/fields.hpp"
#include "sflash/fourier.hpp"
#include "sflash/noise.hpp"
#include "sflash/epdiff.hpp"
#include "sflash/flow.hpp"
#include "sflash/moments.hpp"
#include "sflash/similarity.hpp"
#include "sflash/parallel.hpp"
#include "sflash/estimation.hpp"
#include "sflash/io.hpp"
#include "sflash/synthetic.hpp"
#include "sflash/config.hpp"
#include "sflash/dataset.hpp"
