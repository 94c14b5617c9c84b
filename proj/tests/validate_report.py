"""Validates report.json files against docs/report.schema.json."""
import json
import sys

import jsonschema


def main(schema_path, *reports):
    with open(schema_path) as f:
        schema = json.load(f)
    for path in reports:
        with open(path) as f:
            jsonschema.validate(json.load(f), schema)
        print(f"{path}: valid")


if __name__ == "__main__":
    main(*sys.argv[1:])
