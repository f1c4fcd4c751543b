"""Writing experiment results to CSV files described by a manifest."""

import os
import csv
import math

from typing import Sequence

import msgspec

from xxhash import xxh3_64_hexdigest

from .config import ExperimentConfig
from .helpers import save_json, load_json
from .metadata import OUTPUT_VERSIONS, TOOL_VERSION

MANIFEST_NAME = 'manifest.json'

OUTPUT_KINDS: dict[str, str] = {
    'sweep.csv' : 'sweep',
    'convergence_curves.csv' : 'convergence',
    'convergence_summary.csv' : 'convergence',
    'runs.csv' : 'runs',
    'slots.csv' : 'slots',
    'ne_check.csv' : 'ne_check',
}
"""A map of output file names to the kinds of output they hold."""

class Manifest(msgspec.Struct, frozen = True):
    """A description of the outputs in a directory and the configuration that produced them."""

    config_hash: str
    seed: int
    tool_version: str
    versions: dict[str, int]
    files: list[str]

def config_hash(config: ExperimentConfig) -> str:
    """Fingerprint a configuration."""

    return xxh3_64_hexdigest(msgspec.json.encode(config))

def write_csv(path: str, records: Sequence[msgspec.Struct], record_type: type[msgspec.Struct]) -> None:
    """Write records to a UTF-8 CSV file with a header row. Non-finite numbers are rejected."""

    columns = [field.name for field in msgspec.structs.fields(record_type)]

    with open(path, 'w', encoding='utf-8', newline='') as writer:
        csv_writer = csv.DictWriter(writer, fieldnames=columns, lineterminator='\n')
        csv_writer.writeheader()

        for record in records:
            row = msgspec.structs.asdict(record)

            for column, value in row.items():
                if isinstance(value, float) and not math.isfinite(value):
                    raise ValueError(f'Refusing to write the non-finite value {value} to column `{column}` of {path}.')

            csv_writer.writerow(row)

def export_metrics(output_dir: str, config: ExperimentConfig, outputs: dict[str, tuple[type[msgspec.Struct], Sequence[msgspec.Struct]]]) -> Manifest:
    """Write each output to its CSV file and record them in the directory's manifest.

    Args:
        output_dir (str): The directory to write to, which is created if necessary.
        config (ExperimentConfig): The configuration that produced the outputs.
        outputs (dict[str, tuple[type[msgspec.Struct], Sequence[msgspec.Struct]]]): A map of file names to the type of their records and the records themselves.

    Returns:
        Manifest: The manifest written alongside the outputs."""

    os.makedirs(output_dir, exist_ok=True)

    for name, (record_type, records) in outputs.items():
        if name not in OUTPUT_KINDS:
            raise ValueError(f'{name} is not a known output file.')

        write_csv(os.path.join(output_dir, name), records, record_type)

    fingerprint = config_hash(config)
    files = set(outputs)

    # Keep the files of earlier exports made with the same configuration.
    manifest_path = os.path.join(output_dir, MANIFEST_NAME)

    if os.path.exists(manifest_path):
        previous = load_json(manifest_path)

        if previous.get('config_hash') == fingerprint:
            files |= set(previous.get('files', [])) & set(OUTPUT_KINDS)

    manifest = Manifest(
        config_hash=fingerprint,
        seed=config.seed,
        tool_version=TOOL_VERSION,
        versions={kind: OUTPUT_VERSIONS[kind] for kind in sorted({OUTPUT_KINDS[file] for file in files} | {'manifest'})},
        files=sorted(files),
    )

    save_json(manifest_path, manifest)

    return manifest
