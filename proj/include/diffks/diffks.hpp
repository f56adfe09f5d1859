#pragma once

#include "diffks/autodiff.hpp"
#include "diffks/basis.hpp"
#include "diffks/boys.hpp"
#include "diffks/curve.hpp"
#include "diffks/dataio.hpp"
#include "diffks/diffgrad.hpp"
#include "diffks/error.hpp"
#include "diffks/functionals.hpp"
#include "diffks/geometry.hpp"
#include "diffks/grid.hpp"
#include "diffks/integrals.hpp"
#include "diffks/neuralnet.hpp"
#include "diffks/parallel.hpp"
#include "diffks/scf.hpp"
#include "diffks/train.hpp"
#include "diffks/xcfunc.hpp"
