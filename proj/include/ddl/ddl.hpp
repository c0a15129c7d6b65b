#ifndef DDL_DDL_HPP
#define DDL_DDL_HPP

#include "ddl/classifiers.hpp"
#include "ddl/config.hpp"
#include "ddl/data_io.hpp"
#include "ddl/dictionary.hpp"
#include "ddl/dsc.hpp"
#include "ddl/errors.hpp"
#include "ddl/inference.hpp"
#include "ddl/losses.hpp"
#include "ddl/model_io.hpp"
#include "ddl/parallel.hpp"
#include "ddl/rng.hpp"
#include "ddl/sparse_coding.hpp"
#include "ddl/trainer.hpp"

#endif  // DDL_DDL_HPP
