#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tamperloc/netpbm.hpp"
#include "tamperloc/rng.hpp"
#include "tamperloc/tensor.hpp"
#include "tamperloc/types.hpp"

namespace tamperloc {

// One synthetic forgery: RGB image plus binary mask (255 = tampered pixel),
// with enough provenance to reproduce the sample.
struct ForgerySample {
  ImageU8 image;
  ImageU8 mask;
  std::string host_id;
  std::string donor_id;
  Index paste_x = 0;
  Index paste_y = 0;
  Scalar paste_scale = 1.0;
  std::vector<std::string> aug_log;
};

struct AugmentConfig {
  Scalar resize_lo = 0.5;
  Scalar resize_hi = 2.0;
  Index crop_h = 64;
  Index crop_w = 64;
  Scalar flip_p = 0.5;
  Scalar noise_p = 0.5;
  Scalar blur_p = 0.5;
  Scalar photometric_p = 0.5;
  Scalar jpeg_p = 0.5;
  int jpeg_q_lo = 71;
  int jpeg_q_hi = 95;
  Scalar noise_sigma_lo = 1.0;
  Scalar noise_sigma_hi = 10.0;
  Scalar blur_sigma_lo = 0.5;
  Scalar blur_sigma_hi = 2.0;
  Scalar brightness_delta = 0.25;
  Scalar contrast_delta = 0.25;
  Scalar saturation_delta = 0.25;
  Scalar hue_delta_deg = 18.0;
  std::uint64_t master_seed = 0;

  void validate() const;
};

// All random choices for one augmentation pass, drawn up front so the same
// chain can be replayed on image and mask independently.
struct AugPlan {
  Scalar resize_factor = 1.0;
  Index resized_h = 0;
  Index resized_w = 0;
  Index crop_x = 0;
  Index crop_y = 0;
  Index crop_h = 0;
  Index crop_w = 0;
  bool flip = false;
  bool noise = false;
  Scalar noise_sigma = 0.0;
  std::uint64_t noise_seed = 0;
  bool blur = false;
  Scalar blur_sigma = 0.0;
  bool photometric = false;
  Scalar brightness = 1.0;
  Scalar contrast = 1.0;
  Scalar saturation = 1.0;
  Scalar hue_deg = 0.0;
  bool jpeg = false;
  int jpeg_q = 0;
};

// image geometry helpers (half-pixel sampling convention)
ImageU8 resize_bilinear(const ImageU8& img, Index oh, Index ow);
ImageU8 resize_nearest(const ImageU8& img, Index oh, Index ow);
ImageU8 pad_replicate_to(const ImageU8& img, Index min_h, Index min_w);
ImageU8 pad_reflect_to(const ImageU8& img, Index min_h, Index min_w);
ImageU8 crop_image(const ImageU8& img, Index y0, Index x0, Index ch, Index cw);
ImageU8 hflip(const ImageU8& img);

// photometric / degradation helpers (3-channel only)
ImageU8 add_gaussian_noise(const ImageU8& img, Scalar sigma,
                           std::uint64_t seed);
ImageU8 gaussian_blur(const ImageU8& img, Scalar sigma);
ImageU8 photometric_jitter(const ImageU8& img, Scalar brightness,
                           Scalar contrast, Scalar saturation, Scalar hue_deg);

AugPlan draw_aug_plan(Index h, Index w, const AugmentConfig& cfg,
                      RngStream& rng);
// geometric chain only: resize -> pad -> crop -> flip
ImageU8 apply_geometric(const ImageU8& img, const AugPlan& plan, bool nearest);
ForgerySample apply_aug_plan(const ForgerySample& s, const AugPlan& plan);
ForgerySample augment(const ForgerySample& s, const AugmentConfig& cfg,
                      RngStream& rng);

// Pastes the donor pixels under donor_mask into host at a random scale in
// [0.5, 1.5] and uniform position; hard edges, mask = footprint.
ForgerySample composite(const ImageU8& host, const ImageU8& donor,
                        const ImageU8& donor_mask, RngStream& rng);

// procedural texture generators used for the desk corpus
ImageU8 procedural_host(Index size, RngStream& rng);
ImageU8 procedural_donor(Index size, RngStream& rng);
ImageU8 procedural_mask(Index size, RngStream& rng);

// n composited samples; every sample's tampered ratio falls in [1.5%, 35%]
// by resampling mask and placement.
std::vector<ForgerySample> procedural_corpus(Index n, Index size,
                                             const RngStream& rng);

// dataset directory layout: images/NNNNNN.ppm, masks/NNNNNN.pgm, manifest.txt
void write_dataset(const std::string& dir,
                   const std::vector<ForgerySample>& samples);

struct DatasetEntry {
  std::string name;
  ImageU8 image;
  ImageU8 mask;
};
std::vector<DatasetEntry> load_dataset(const std::string& dir);

// external corpus layout: images/NNNNNN.ppm plus donor_masks/NNNNNN.pgm
// (object footprint per image), listed by manifest.txt
std::vector<DatasetEntry> load_donor_corpus(const std::string& dir);

// n splices drawn from an external corpus: hosts resized to size x size,
// donors capped to size on their longer side, same ratio window as the
// procedural corpus
std::vector<ForgerySample> donor_corpus(const std::vector<DatasetEntry>& src,
                                        Index n, Index size,
                                        const RngStream& rng);

// training views: pixels scaled to [-0.5, 0.5], NCHW
Tensor image_to_tensor(const ImageU8& img);
Tensor images_to_batch(const std::vector<const ImageU8*>& imgs);
ArrayX mask_to_gt01(const ImageU8& mask);

Scalar tampered_ratio(const ImageU8& mask);
// mean squared 3x3 Laplacian response over the image (all channels)
Scalar laplacian_energy(const ImageU8& img);

}  // namespace tamperloc
