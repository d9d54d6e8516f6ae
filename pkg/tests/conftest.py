import json

import pytest

from clozeprobe.corpus import RelationTemplate, Cardinality


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    return path


def fact_record(fact_id, sub, obj, relation, evidences=None):
    return {
        "id": fact_id,
        "sub_label": sub,
        "obj_label": obj,
        "relation": relation,
        "evidences": evidences or [],
    }


@pytest.fixture
def birth_templates():
    return {
        "place_of_birth": RelationTemplate(
            "place_of_birth", "[S] was born in [O]", Cardinality.N_TO_ONE
        ),
        "date_of_birth": RelationTemplate(
            "date_of_birth", "[S] was born in the year [O]", Cardinality.N_TO_ONE
        ),
        "place_of_death": RelationTemplate(
            "place_of_death", "[S] died in [O]", Cardinality.N_TO_ONE
        ),
    }
