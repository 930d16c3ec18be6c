"""
Title: Looking at the augmentation parameters
Description: What each of the seven omega coordinates does to an image.
"""
"""
## Setup

Every augmentation here is a deterministic function of a vector
`omega` in [0, 1]^7. Three coordinates drive color (brightness,
saturation, contrast), two drive translation and two place the cutout
window. The value 0.5 is the identity for color and translation.
"""

import sys
from pathlib import Path

import numpy as np

from augself.augment import AugConfig, AugParams, apply_all, apply_color, sample_params, test_image, write_pnm

out_dir = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output/augmentations")
out_dir.mkdir(parents=True, exist_ok=True)

image = test_image(32)
print("test image", image.shape, "range", image.min(), image.max())

"""
## The identity point

With the color and translation coordinates at 0.5 the image comes back
bit-for-bit. Cutout always removes a window, so it is disabled here.
"""

cfg = AugConfig(enabled=("color", "translation"))
same = apply_all(image[None], AugParams.from_vector([0.5] * 7), cfg).data[0]
print("identity reproduces the input exactly:", np.array_equal(same, image))

"""
## Sweeping one coordinate at a time

Moving brightness from 0 to 1 shifts the mean pixel value linearly.
"""

for b in (0.0, 0.25, 0.5, 0.75, 1.0):
    shifted = apply_color(image[None], np.array([[b, 0.5, 0.5]])).data[0]
    print(f"brightness omega={b:.2f}  mean pixel {shifted.mean():+.3f}")

"""
## A full random draw

`sample_params` draws all seven coordinates per sample, whether or not
an augmentation is enabled, so the random stream does not depend on the
policy.
"""

rng = np.random.default_rng(0)
full = AugConfig.from_preset("strong")
params = sample_params(rng, full, 4)
batch = apply_all(np.repeat(image[None], 4, axis=0), params, full).data
for i, (omega, img) in enumerate(zip(params.as_vector(), batch)):
    write_pnm(out_dir / f"sample_{i}.ppm", img)
    print(f"sample {i}: omega={np.round(omega, 2)}  zeroed pixels={np.count_nonzero(img == 0)}")
write_pnm(out_dir / "original.ppm", image)
print("images written to", out_dir)
