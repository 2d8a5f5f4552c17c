#pragma once

// Umbrella header.
#include "glcert/attack.hpp"
#include "glcert/certify.hpp"
#include "glcert/classify.hpp"
#include "glcert/core.hpp"
#include "glcert/data.hpp"
#include "glcert/defend.hpp"
#include "glcert/experiment.hpp"
#include "glcert/graph.hpp"
#include "glcert/io.hpp"
#include "glcert/models.hpp"
#include "glcert/pipeline.hpp"
#include "glcert/solve.hpp"
#include "glcert/spatial.hpp"
