#pragma once

#include "sfmdepth/alignment.hpp"
#include "sfmdepth/conditioning.hpp"
#include "sfmdepth/depth_io.hpp"
#include "sfmdepth/depth_map.hpp"
#include "sfmdepth/depth_provider.hpp"
#include "sfmdepth/error.hpp"
#include "sfmdepth/evaluation.hpp"
#include "sfmdepth/geometry.hpp"
#include "sfmdepth/grid.hpp"
#include "sfmdepth/kdtree.hpp"
#include "sfmdepth/mesh.hpp"
#include "sfmdepth/pipeline.hpp"
#include "sfmdepth/point_fusion.hpp"
#include "sfmdepth/sfm_io.hpp"
#include "sfmdepth/sfm_model.hpp"
#include "sfmdepth/synthscene.hpp"
#include "sfmdepth/tsdf.hpp"
