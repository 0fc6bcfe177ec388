#pragma once

#include "stablegnn/adam.hpp"
#include "stablegnn/checkpoint.hpp"
#include "stablegnn/config.hpp"
#include "stablegnn/errors.hpp"
#include "stablegnn/evaluate.hpp"
#include "stablegnn/gnn.hpp"
#include "stablegnn/gradcheck.hpp"
#include "stablegnn/gso.hpp"
#include "stablegnn/matrix.hpp"
#include "stablegnn/movielens.hpp"
#include "stablegnn/parallel.hpp"
#include "stablegnn/perturbation.hpp"
#include "stablegnn/rng.hpp"
#include "stablegnn/signal.hpp"
#include "stablegnn/trainer.hpp"
