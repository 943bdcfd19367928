// plantcloud - header-only C++20 toolkit for plant point-cloud processing
// SPDX-License-Identifier: MIT

#ifndef PLANTCLOUD_PLANTCLOUD_HPP
#define PLANTCLOUD_PLANTCLOUD_HPP

#include "plantcloud/config.hpp"
#include "plantcloud/core/connected_components.hpp"
#include "plantcloud/core/kdtree.hpp"
#include "plantcloud/core/nn_propagate.hpp"
#include "plantcloud/core/ply_io.hpp"
#include "plantcloud/core/point_cloud.hpp"
#include "plantcloud/core/types.hpp"
#include "plantcloud/core/voxel_filter.hpp"
#include "plantcloud/lscnet/checkpoint.hpp"
#include "plantcloud/lscnet/fps.hpp"
#include "plantcloud/lscnet/grouping.hpp"
#include "plantcloud/lscnet/network.hpp"
#include "plantcloud/lscnet/segment.hpp"
#include "plantcloud/lscnet/train.hpp"
#include "plantcloud/metrics/evaluate.hpp"
#include "plantcloud/normalize/landmarks.hpp"
#include "plantcloud/normalize/plane_msac.hpp"
#include "plantcloud/normalize/pose.hpp"
#include "plantcloud/normalize/scale.hpp"
#include "plantcloud/partition/blocks.hpp"
#include "plantcloud/superpoint/cluster2d.hpp"
#include "plantcloud/superpoint/convexify.hpp"
#include "plantcloud/superpoint/extract.hpp"
#include "plantcloud/superpoint/tsne.hpp"
#include "plantcloud/synth.hpp"

#endif // PLANTCLOUD_PLANTCLOUD_HPP
