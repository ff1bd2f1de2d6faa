#ifndef NLDIFF_NLDIFF_HPP
#define NLDIFF_NLDIFF_HPP

#include "nldiff/diffusivity.hpp"
#include "nldiff/edges.hpp"
#include "nldiff/errors.hpp"
#include "nldiff/filter.hpp"
#include "nldiff/operators.hpp"
#include "nldiff/params.hpp"
#include "nldiff/pgm.hpp"
#include "nldiff/raw3d.hpp"
#include "nldiff/solver.hpp"
#include "nldiff/stopping.hpp"
#include "nldiff/volume.hpp"

#endif
