#pragma once

// Everything except the HTTP service (vlfuse/service.hpp), which pulls in httplib.

#include "vlfuse/actions.hpp"
#include "vlfuse/diff.hpp"
#include "vlfuse/embedder.hpp"
#include "vlfuse/error.hpp"
#include "vlfuse/frame.hpp"
#include "vlfuse/geometry.hpp"
#include "vlfuse/insitu/checkpoint.hpp"
#include "vlfuse/insitu/graph.hpp"
#include "vlfuse/insitu/model.hpp"
#include "vlfuse/insitu/session.hpp"
#include "vlfuse/insitu/train.hpp"
#include "vlfuse/integrate.hpp"
#include "vlfuse/io/binary.hpp"
#include "vlfuse/io/frameset.hpp"
#include "vlfuse/io/inventory_io.hpp"
#include "vlfuse/io/png.hpp"
#include "vlfuse/io/vlf.hpp"
#include "vlfuse/io/volume_io.hpp"
#include "vlfuse/mesh.hpp"
#include "vlfuse/meshing.hpp"
#include "vlfuse/pipeline.hpp"
#include "vlfuse/query.hpp"
#include "vlfuse/segmentation.hpp"
#include "vlfuse/store.hpp"
#include "vlfuse/synth.hpp"
#include "vlfuse/volume.hpp"
