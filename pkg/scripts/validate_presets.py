"""Clause-by-clause hypothesis report for every shipped preset (JSON to stdout)."""
import json

from spinboson.model import PRESETS, validate_hypotheses


def main():
    report = {name: validate_hypotheses(model).to_dict() for name, model in sorted(PRESETS.items())}
    print(json.dumps(report, indent=2))


if __name__ == "__main__":
    main()
