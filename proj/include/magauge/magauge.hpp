#pragma once

#include "geometry.hpp"
#include "quadrature.hpp"
#include "lagrange.hpp"
#include "mesh.hpp"
#include "fe_space.hpp"
#include "sparse.hpp"
#include "potentials.hpp"
#include "assemble.hpp"
#include "gauge.hpp"
#include "eig.hpp"
#include "dense_eig.hpp"
#include "diagnostics.hpp"
#include "experiment.hpp"
