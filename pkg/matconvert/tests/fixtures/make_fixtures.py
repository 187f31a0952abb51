"""Builds the synthetic MATLAB-container archive used by the converter tests.

Layout mirrors the published hip-worn IMU archive: Subject<N>/a<A>t<T>.mat
with char metadata fields and an N x 6 double `sensor_readings` matrix
(accelerometer g, gyroscope deg/s). Values are quantized to float32
before saving, matching the sensors' native precision, so the 9-digit
CSV round-trip is exact at that precision.

Also writes `expected.json` with first/last rows per recording for
spot-value tests.  Run once; outputs are committed.

    python3 matconvert/tests/fixtures/make_fixtures.py
"""

import json
from pathlib import Path

import numpy as np
from scipy.io import savemat

HERE = Path(__file__).parent
ARCHIVE = HERE / "archive"
SUBJECTS = (1, 2)
ACTIVITIES = range(1, 13)
TRIALS = (1, 2)


def readings(rng, n):
    acc = rng.normal(0.0, 0.6, size=(n, 3)) + np.array([0.0, 0.0, 1.0])
    gyro = rng.normal(0.0, 90.0, size=(n, 3))
    block = np.hstack([acc, gyro])
    return block.astype(np.float32).astype(np.float64)


def main():
    rng = np.random.default_rng(8881)
    expected = {}
    for subject in SUBJECTS:
        sdir = ARCHIVE / f"Subject{subject}"
        sdir.mkdir(parents=True, exist_ok=True)
        for activity in ACTIVITIES:
            for trial in TRIALS:
                n = int(rng.integers(30, 60))
                block = readings(rng, n)
                fields = {
                    "version": "1.0",
                    "subject": str(subject),
                    "activity_number": str(activity),
                    "trial": str(trial),
                    "sensor_location": "front-right-hip",
                    "sensor_readings": block,
                }
                compress = (activity + trial) % 5 == 0
                if subject == 2 and activity == 3:
                    # archive-version variant: differently named count field
                    fields["activity_num"] = fields.pop("activity_number")
                if subject == 2 and activity == 7:
                    # no metadata fields at all: the file name carries them
                    del fields["activity_number"]
                    del fields["trial"]
                    del fields["subject"]
                if subject == 1 and activity == 9 and trial == 1:
                    # magnetometer columns present: converter keeps the first 6
                    extra = rng.normal(0.0, 30.0, size=(n, 3))
                    fields["sensor_readings"] = np.hstack(
                        [block, extra.astype(np.float32).astype(np.float64)])
                path = sdir / f"a{activity}t{trial}.mat"
                savemat(path, fields, do_compression=compress)
                rid = f"s{subject:02d}a{activity:02d}t{trial}"
                expected[rid] = {
                    "samples": n,
                    "first": block[0].tolist(),
                    "last": block[-1].tolist(),
                }

    # a subject directory holding only damaged goods: both files are skipped
    bad = ARCHIVE / "Subject3"
    bad.mkdir(parents=True, exist_ok=True)
    good = ARCHIVE / "Subject1" / "a1t1.mat"
    (bad / "a1t1.mat").write_bytes(good.read_bytes()[:100])  # truncated
    savemat(bad / "a2t1.mat", {"version": "1.0", "subject": "3",
                               "activity_number": "2", "trial": "1"})

    (HERE / "expected.json").write_text(json.dumps(expected, indent=1) + "\n")
    total = len(SUBJECTS) * len(list(ACTIVITIES)) * len(TRIALS)
    print(f"wrote {total} good containers (+2 damaged) under {ARCHIVE}")


if __name__ == "__main__":
    main()
