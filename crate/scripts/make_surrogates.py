"""Generate deterministic stand-ins for the Energy, Airfoil and Music tables.

The real UCI files are not redistributable from this repository's build
environment, so these generators reproduce each table's shape (row count,
feature count, value ranges, design grid) with a synthetic target.  They are
used by the benchmark presets and the acceptance suite; drop the genuine CSVs
into data/ under the same names to run against the originals.

    python3 scripts/make_surrogates.py
"""

import os

import numpy as np

OUT = os.path.join(os.path.dirname(__file__), "..", "data")


def energy(rng):
    # 12 building shapes x 4 orientations x 16 glazing configurations = 768 rows.
    shapes = [
        (0.98, 514.5, 294.0, 110.25, 7.0),
        (0.90, 563.5, 318.5, 122.50, 7.0),
        (0.86, 588.0, 294.0, 147.00, 7.0),
        (0.82, 612.5, 318.5, 147.00, 7.0),
        (0.79, 637.0, 343.0, 147.00, 7.0),
        (0.76, 661.5, 416.5, 122.50, 7.0),
        (0.74, 686.0, 245.0, 220.50, 3.5),
        (0.71, 710.5, 269.5, 220.50, 3.5),
        (0.69, 735.0, 294.0, 220.50, 3.5),
        (0.66, 759.5, 318.5, 220.50, 3.5),
        (0.64, 784.0, 343.0, 220.50, 3.5),
        (0.62, 808.5, 367.5, 220.50, 3.5),
    ]
    glazing = [(0.0, 0)] + [(g, d) for g in (0.10, 0.25, 0.40) for d in range(1, 6)]
    rows = []
    for rc, sa, wa, ra, oh in shapes:
        for orient in range(2, 6):
            for ga, gd in glazing:
                heat = (
                    6.0
                    + 3.1 * oh
                    + 0.018 * (wa - 245.0)
                    - 9.0 * (rc - 0.62)
                    + 22.0 * ga
                    + 0.35 * (orient - 3.5) * ga * 4.0
                    + (0.6 if gd in (2, 4) else 0.0) * ga * 5.0
                    + rng.normal(0.0, 0.9)
                )
                rows.append([rc, sa, wa, ra, oh, orient, ga, gd, round(heat, 2)])
    header = "relative_compactness,surface_area,wall_area,roof_area,overall_height,orientation,glazing_area,glazing_distribution,heating_load"
    return header, np.array(rows)


def airfoil(rng):
    freqs = np.array([200, 250, 315, 400, 500, 630, 800, 1000, 1250, 1600, 2000,
                      2500, 3150, 4000, 5000, 6300, 8000, 10000, 12500, 16000, 20000], float)
    chords = np.array([0.0254, 0.0508, 0.1016, 0.1524, 0.2286, 0.3048])
    speeds = np.array([31.7, 39.6, 55.5, 71.3])
    n = 1503
    f = rng.choice(freqs, n)
    chord = rng.choice(chords, n)
    u = rng.choice(speeds, n)
    angle = np.round(rng.uniform(0.0, 22.2, n), 1)
    thick = np.round(0.0004 + 0.0022 * chord / 0.3048 * (1.0 + angle / 6.0) * (71.3 / u) ** 0.2, 6)
    strouhal = f * thick / u
    spl = (
        126.0
        + 10.0 * np.log10(u / 31.7)
        - 6.0 * (np.log10(strouhal) + 1.6) ** 2
        - 12.0 * chord
        + 0.15 * angle
        + rng.normal(0.0, 1.2, n)
    )
    header = "frequency,angle_of_attack,chord_length,free_stream_velocity,displacement_thickness,sound_pressure"
    return header, np.column_stack([f, angle, chord, u, thick, np.round(spl, 3)])


def music(rng):
    n, d, regions = 1059, 68, 33
    lat = rng.uniform(-35.0, 55.0, regions)
    centers = rng.normal(0.0, 1.0, (regions, d))
    label = rng.integers(0, regions, n)
    x = centers[label] * 0.8 + rng.normal(0.0, 0.6, (n, d))
    y = lat[label] + 0.5 * x[:, 0] + rng.normal(0.0, 3.0, n)
    # latitude shifted so the target stays away from zero
    y = y + 60.0
    header = ",".join([f"f{i}" for i in range(d)] + ["latitude_shifted"])
    return header, np.column_stack([x, y])


def write(name, header, data):
    path = os.path.join(OUT, name)
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in data:
            fh.write(",".join(f"{v:.10g}" for v in row) + "\n")
    print(path, data.shape)


if __name__ == "__main__":
    write("energy_surrogate.csv", *energy(np.random.default_rng(20170801)))
    write("airfoil_surrogate.csv", *airfoil(np.random.default_rng(20170802)))
    write("music_surrogate.csv", *music(np.random.default_rng(20170803)))
