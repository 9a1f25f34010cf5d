import csv
from pathlib import Path

from . import __version__


def fmt(x):
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, (list, tuple)):
        return ",".join(fmt(v) for v in x)
    return str(x)


def write_csv(path, columns, rows, header=()):
    """Write rows under '#'-prefixed header lines; floats use shortest round-trip repr."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(f"# qndmetro {__version__}\n")
        for key, value in header:
            fh.write(f"# {key}={fmt(value)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            if isinstance(row, dict):
                row = [row[c] for c in columns]
            writer.writerow([fmt(v) for v in row])
    return path


def read_csv(path):
    """Return (header dict, column names, rows as lists of strings)."""
    header, body = {}, []
    with Path(path).open() as fh:
        for line in fh:
            if line.startswith("#"):
                key, sep, value = line[1:].strip().partition("=")
                if sep:
                    header[key] = value
            else:
                body.append(line)
    reader = list(csv.reader(body))
    return header, reader[0], reader[1:]
