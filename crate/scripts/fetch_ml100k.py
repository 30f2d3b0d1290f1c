#!/usr/bin/env python3
"""Materialize MovieLens-100K `u.data` under data/ml-100k/.

Tries the GroupLens archive first; falls back to the copy bundled in the
`pytorch-widedeep` wheel (fetched with `pip download`) when the archive host
is unreachable.
"""
import io
import pathlib
import subprocess
import sys
import tempfile
import urllib.request
import zipfile

OUT = pathlib.Path(__file__).resolve().parent.parent / "data" / "ml-100k" / "u.data"
URL = "https://files.grouplens.org/datasets/movielens/ml-100k.zip"


def from_grouplens():
    with urllib.request.urlopen(URL, timeout=30) as resp:
        archive = zipfile.ZipFile(io.BytesIO(resp.read()))
    return archive.read("ml-100k/u.data")


def from_wheel():
    import pandas as pd

    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "-d", tmp,
             "pytorch-widedeep==1.7.0"],
            check=True,
        )
        wheel = next(pathlib.Path(tmp).glob("*.whl"))
        blob = zipfile.ZipFile(wheel).read(
            "pytorch_widedeep/datasets/data/MovieLens100k_data.parquet.brotli")
    df = pd.read_parquet(io.BytesIO(blob))
    rows = df[["user_id", "movie_id", "rating", "timestamp"]].itertuples(index=False)
    return "".join(f"{u}\t{i}\t{r}\t{t}\n" for u, i, r, t in rows).encode()


def main():
    if OUT.exists():
        print(f"{OUT} already present")
        return
    OUT.parent.mkdir(parents=True, exist_ok=True)
    try:
        data = from_grouplens()
    except Exception as err:  # noqa: BLE001
        print(f"grouplens unreachable ({err}); using bundled wheel copy")
        data = from_wheel()
    OUT.write_bytes(data)
    print(f"wrote {OUT} ({len(data)} bytes)")


if __name__ == "__main__":
    main()
