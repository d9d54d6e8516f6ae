import json

import pytest

from clozeprobe.corpus import (
    MASK,
    Cardinality,
    ClozeQuery,
    EvidenceSentence,
    Fact,
    FactSet,
    QuerySource,
    RelationTemplate,
    compile_queries,
    evidence_query,
    load_conceptnet,
    load_google_re,
    load_squad_cloze,
    load_templates,
    load_trex,
    render_cloze,
    sample_mention_queries,
    tokenize,
    valid_object_index,
)
from clozeprobe.errors import ConfigError, ParseError, SingleTokenViolation

from conftest import fact_record, write_jsonl


class TestTokenize:
    def test_whitespace_with_attached_punctuation(self):
        assert tokenize("Dante was born in Florence.") == \
            ["Dante", "was", "born", "in", "Florence."]

    def test_mask_is_always_its_own_token(self):
        assert tokenize("Ravens can [MASK].") == ["Ravens", "can", MASK, "."]
        assert tokenize("([MASK])") == ["(", MASK, ")"]
        assert tokenize("plain [MASK] here") == ["plain", MASK, "here"]


class TestTypes:
    def test_masked_evidence_requires_exactly_one_mask(self):
        EvidenceSentence("x", masked_text="a [MASK] b")
        with pytest.raises(ValueError):
            EvidenceSentence("x", masked_text="no mask at all")
        with pytest.raises(ValueError):
            EvidenceSentence("x", masked_text="[MASK] and [MASK]")

    def test_template_slots_must_appear_exactly_once(self):
        with pytest.raises(ValueError):
            RelationTemplate("r", "[S] then [S] is [O]")
        with pytest.raises(ValueError):
            RelationTemplate("r", "[S] has no object slot")

    def test_query_invariants(self):
        with pytest.raises(ValueError):
            ClozeQuery(("a", "b"), 0, "gold", "f", QuerySource.TEMPLATE)  # no mask
        with pytest.raises(ValueError):
            ClozeQuery((MASK,), 0, "two words", "f", QuerySource.TEMPLATE)

    def test_fact_rejects_blank_surfaces(self):
        with pytest.raises(ValueError):
            Fact("f", "  ", "Florence", "r")


class TestGoogleRe:
    def test_basic_record_uses_its_relation_template(self, tmp_path, birth_templates):
        path = write_jsonl(tmp_path / "f.jsonl", [
            fact_record("g1", "Dante", "Florence", "place_of_birth"),
        ])
        factset = load_google_re(path, birth_templates)
        assert len(factset.facts) == 1
        template = factset.templates[factset.facts[0].relation_id]
        assert template.template == "[S] was born in [O]"

    def test_multi_token_object_dropped_and_counted(self, tmp_path, birth_templates):
        path = write_jsonl(tmp_path / "f.jsonl", [
            fact_record("g1", "Someone", "New York City", "place_of_birth"),
            fact_record("g2", "Dante", "Florence", "place_of_birth"),
        ])
        factset = load_google_re(path, birth_templates)
        assert [f.id for f in factset.facts] == ["g2"]
        assert factset.exclusions["multi_token_object"] == 1

    def test_empty_file(self, tmp_path, birth_templates):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        factset = load_google_re(path, birth_templates)
        assert factset.facts == [] and sum(factset.exclusions.values()) == 0

    def test_malformed_line_names_line_number(self, tmp_path, birth_templates):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id": "a", "sub_label": "S", "obj_label": "O", "relation": "place_of_birth"}\nnot json\n')
        with pytest.raises(ParseError, match="2"):
            load_google_re(path, birth_templates)

    def test_unknown_relation_is_a_config_error(self, tmp_path, birth_templates):
        path = write_jsonl(tmp_path / "f.jsonl", [
            fact_record("g1", "Dante", "Florence", "nonexistent_relation"),
        ])
        with pytest.raises(ConfigError):
            load_google_re(path, birth_templates)

    def test_duplicate_triple_deduplicated(self, tmp_path, birth_templates):
        path = write_jsonl(tmp_path / "f.jsonl", [
            fact_record("g1", "Dante", "Florence", "place_of_birth"),
            fact_record("g2", "Dante", "Florence", "place_of_birth"),
        ])
        factset = load_google_re(path, birth_templates)
        assert len(factset.facts) == 1
        assert factset.exclusions["duplicate"] == 1

    def test_count_conservation(self, tmp_path, birth_templates):
        records = [
            fact_record("a", "Dante", "Florence", "place_of_birth"),
            fact_record("b", "X", "New York", "place_of_birth"),
            fact_record("c", "Dante", "Florence", "place_of_birth"),
            fact_record("d", "Hume", "Edinburgh", "place_of_birth"),
        ]
        path = write_jsonl(tmp_path / "f.jsonl", records)
        factset = load_google_re(path, birth_templates)
        assert len(records) == len(factset.facts) + sum(factset.exclusions.values())


class TestTrex:
    def _records(self, n, relation="P19"):
        return [
            fact_record(f"{relation}-{i}", f"Person{i}", f"City{i}", relation)
            for i in range(n)
        ]

    def _templates(self):
        return {
            "P19": RelationTemplate("P19", "[S] was born in [O]", Cardinality.N_TO_ONE),
            "P20": RelationTemplate("P20", "[S] died in [O]", Cardinality.N_TO_ONE),
        }

    def test_default_cap_is_one_thousand(self, tmp_path):
        path = write_jsonl(tmp_path / "t.jsonl", self._records(1200))
        factset = load_trex(path, self._templates(), seed=7)
        assert len(factset.facts) == 1000
        assert factset.exclusions["subsampled_out"] == 200

    def test_cap_not_binding(self, tmp_path):
        path = write_jsonl(tmp_path / "t.jsonl", self._records(10, "P20"))
        factset = load_trex(path, self._templates(), per_relation_cap=1000, seed=7)
        assert len(factset.facts) == 10

    def test_subsampling_is_deterministic(self, tmp_path):
        path = write_jsonl(tmp_path / "t.jsonl", self._records(120))
        a = load_trex(path, self._templates(), per_relation_cap=30, seed=42)
        b = load_trex(path, self._templates(), per_relation_cap=30, seed=42)
        assert [f.id for f in a.facts] == [f.id for f in b.facts]
        c = load_trex(path, self._templates(), per_relation_cap=30, seed=43)
        assert [f.id for f in a.facts] != [f.id for f in c.facts]

    def test_cap_applies_per_relation(self, tmp_path):
        records = self._records(40, "P19") + self._records(5, "P20")
        path = write_jsonl(tmp_path / "t.jsonl", records)
        factset = load_trex(path, self._templates(), per_relation_cap=10, seed=1)
        by_rel = {}
        for fact in factset.facts:
            by_rel[fact.relation_id] = by_rel.get(fact.relation_id, 0) + 1
        assert by_rel == {"P19": 10, "P20": 5}


class TestConceptnet:
    def test_masks_first_object_occurrence(self, tmp_path):
        path = write_jsonl(tmp_path / "c.jsonl", [
            fact_record("c1", "raven", "fly", "CapableOf",
                        [{"text": "Ravens can fly.", "provenance": "omcs:1"}]),
        ])
        factset = load_conceptnet(path, seed=0)
        assert factset.facts[0].evidences[0].masked_text == "Ravens can [MASK]."

    def test_sentence_choice_is_seeded_and_stable(self, tmp_path):
        evidences = [
            {"text": f"Sentence {i} about how ravens fly high."} for i in range(3)
        ]
        path = write_jsonl(tmp_path / "c.jsonl", [
            fact_record("c1", "raven", "fly", "CapableOf", evidences),
        ])
        chosen = {load_conceptnet(path, seed=5).facts[0].evidences[0].text
                  for _ in range(4)}
        assert len(chosen) == 1

    def test_multi_token_object_dropped(self, tmp_path):
        path = write_jsonl(tmp_path / "c.jsonl", [
            fact_record("c1", "joke", "laugh loudly", "CausesDesire",
                        [{"text": "A joke makes you laugh loudly."}]),
        ])
        factset = load_conceptnet(path, seed=0)
        assert not factset.facts
        assert factset.exclusions["multi_token_object"] == 1

    def test_object_missing_from_sentences_dropped_with_count(self, tmp_path):
        path = write_jsonl(tmp_path / "c.jsonl", [
            fact_record("c1", "cat", "purr", "CapableOf",
                        [{"text": "Cats are quiet animals."}]),
        ])
        factset = load_conceptnet(path, seed=0)
        assert not factset.facts
        assert factset.exclusions["object_not_in_sentence"] == 1


class TestSquad:
    def test_valid_cloze_record(self, tmp_path):
        path = write_jsonl(tmp_path / "s.jsonl", [
            fact_record("q1", "theory of relativity", "Einstein", "squad", [
                {"text": "The theory of relativity was developed by Einstein .",
                 "masked_text": "The theory of relativity was developed by [MASK] ."},
            ]),
        ])
        factset = load_squad_cloze(path)
        assert len(factset.facts) == 1
        assert factset.templates == {}

    def test_multiple_masks_rejected(self, tmp_path):
        path = tmp_path / "s.jsonl"
        record = fact_record("q1", "s", "o", "squad", [
            {"text": "x", "masked_text": "[MASK] and [MASK] ."},
        ])
        path.write_text(json.dumps(record) + "\n")
        with pytest.raises(ParseError):
            load_squad_cloze(path)

    def test_305_record_fixture_loads_fully(self, tmp_path):
        records = [
            fact_record(f"q{i}", f"topic {i}", f"ans{i}", "squad", [
                {"text": f"Fact {i} is ans{i} .",
                 "masked_text": f"Fact {i} is [MASK] ."},
            ])
            for i in range(305)
        ]
        path = write_jsonl(tmp_path / "s.jsonl", records)
        assert len(load_squad_cloze(path).facts) == 305


class TestRenderCloze:
    def test_standard_template(self, birth_templates):
        fact = Fact("f1", "Dante", "Florence", "place_of_birth")
        query = render_cloze(fact, birth_templates["place_of_birth"])
        assert list(query.tokens) == ["Dante", "was", "born", "in", MASK]
        assert query.mask_index == 4
        assert query.gold == "Florence"
        assert query.source is QuerySource.TEMPLATE

    def test_multi_token_subject_shifts_mask(self, birth_templates):
        # "Francesco Bartolomeo Conti was born in [MASK]" tokenizes to
        # 3 subject tokens + was born in + mask -> mask at index 6
        fact = Fact("f2", "Francesco Bartolomeo Conti", "Florence", "place_of_birth")
        query = render_cloze(fact, birth_templates["place_of_birth"])
        assert query.mask_index == 6

    def test_multi_token_object_raises(self, birth_templates):
        fact = Fact("f3", "Someone", "New York", "place_of_birth")
        with pytest.raises(SingleTokenViolation):
            render_cloze(fact, birth_templates["place_of_birth"])

    def test_rendering_is_repeatable(self, birth_templates):
        fact = Fact("f4", "Hume", "Edinburgh", "place_of_birth")
        first = render_cloze(fact, birth_templates["place_of_birth"])
        second = render_cloze(fact, birth_templates["place_of_birth"])
        assert first.tokens == second.tokens


class TestValidObjectIndex:
    def test_direct_construction(self):
        facts = [
            Fact("1", "A", "x", "r"),
            Fact("2", "A", "y", "r"),
            Fact("3", "B", "x", "r"),
        ]
        factset = FactSet(facts, {}, "test")
        assert valid_object_index(factset) == {
            ("A", "r"): {"x", "y"},
            ("B", "r"): {"x"},
        }

    def test_empty(self):
        assert valid_object_index(FactSet([], {}, "test")) == {}

    def test_duplicate_facts_collapse(self):
        facts = [Fact("1", "A", "x", "r"), Fact("2", "A", "x", "r")]
        assert valid_object_index(FactSet(facts, {}, "t")) == {("A", "r"): {"x"}}


def _fact_with_alignments(fact_id, n, relation="P36"):
    evidences = [
        {"text": f"In document {i}, the capital of Freedonia is Zedburg today.",
         "provenance": f"doc:{i}"}
        for i in range(n)
    ]
    return fact_record(fact_id, "Freedonia", "Zedburg", relation, evidences)


class TestSampleMentionQueries:
    def _factset(self, tmp_path, records):
        templates = {"P36": RelationTemplate("P36", "The capital of [S] is [O]",
                                             Cardinality.ONE_TO_ONE)}
        path = write_jsonl(tmp_path / "m.jsonl", records)
        return load_google_re(path, templates)

    def test_fact_with_enough_alignments_contributes_exactly_n(self, tmp_path):
        factset = self._factset(tmp_path, [_fact_with_alignments("m1", 12)])
        queries = sample_mention_queries(factset, per_relation=100,
                                         mentions_per_fact=10, seed=3)
        assert len(queries) == 10
        assert all(q.source is QuerySource.EVIDENCE_MENTION for q in queries)

    def test_fact_below_threshold_excluded(self, tmp_path):
        factset = self._factset(tmp_path, [_fact_with_alignments("m1", 9)])
        queries = sample_mention_queries(factset, per_relation=100,
                                         mentions_per_fact=10, seed=3)
        assert queries == []

    def test_per_relation_cap_not_binding(self, tmp_path):
        records = [_fact_with_alignments(f"m{i}", 4) for i in range(5)]
        # distinct objects so dedup keeps them apart
        for i, record in enumerate(records):
            record["obj_label"] = f"City{i}"
            for ev in record["evidences"]:
                ev["text"] = ev["text"].replace("Zedburg", f"City{i}")
        factset = self._factset(tmp_path, records)
        queries = sample_mention_queries(factset, per_relation=100,
                                         mentions_per_fact=3, seed=3)
        assert len(queries) == 5 * 3

    def test_deterministic_under_seed(self, tmp_path):
        records = [_fact_with_alignments(f"m{i}", 6) for i in range(8)]
        for i, record in enumerate(records):
            record["obj_label"] = f"City{i}"
            for ev in record["evidences"]:
                ev["text"] = ev["text"].replace("Zedburg", f"City{i}")
        factset = self._factset(tmp_path, records)
        a = sample_mention_queries(factset, 4, 3, seed=11)
        b = sample_mention_queries(factset, 4, 3, seed=11)
        assert [(q.fact_id, q.tokens) for q in a] == [(q.fact_id, q.tokens) for q in b]


class TestCompileQueries:
    def test_every_query_satisfies_invariants(self, tmp_path, birth_templates):
        records = [
            fact_record("g1", "Dante", "Florence", "place_of_birth"),
            fact_record("g2", "Mozart", "Vienna", "place_of_death"),
        ]
        path = write_jsonl(tmp_path / "f.jsonl", records)
        factset = load_google_re(path, birth_templates)
        queries = compile_queries(factset)
        assert len(queries) == 2
        for query in queries:
            assert query.tokens.count(MASK) == 1
            assert query.tokens[query.mask_index] == MASK
            assert " " not in query.gold

    def test_evidence_query_from_premasked_source(self, tmp_path):
        path = write_jsonl(tmp_path / "s.jsonl", [
            fact_record("q1", "capital of France", "Paris", "squad", [
                {"text": "The capital of France is Paris .",
                 "masked_text": "The capital of France is [MASK] ."},
            ]),
        ])
        queries = compile_queries(load_squad_cloze(path))
        assert queries[0].tokens[queries[0].mask_index] == MASK
        assert queries[0].gold == "Paris"

    def test_ingestion_is_deterministic(self, tmp_path, birth_templates):
        records = [
            fact_record(f"g{i}", f"Person{i}", f"City{i}", "place_of_birth",
                        [{"text": f"Person{i} was born in City{i}."}])
            for i in range(20)
        ]
        path = write_jsonl(tmp_path / "f.jsonl", records)
        a = load_google_re(path, birth_templates)
        b = load_google_re(path, birth_templates)
        assert a.facts == b.facts


class TestLoadTemplates:
    def test_roundtrip(self, tmp_path):
        path = tmp_path / "templates.tsv"
        path.write_text(
            "P36\tThe capital of [S] is [O]\t1-1\n"
            "P47\t[S] shares a border with [O]\tN-M\n",
            encoding="utf-8",
        )
        table = load_templates(path)
        assert table["P36"].cardinality is Cardinality.ONE_TO_ONE
        assert table["P47"].cardinality is Cardinality.N_TO_M

    def test_bad_cardinality_rejected(self, tmp_path):
        path = tmp_path / "templates.tsv"
        path.write_text("P36\tThe capital of [S] is [O]\t1-2\n", encoding="utf-8")
        with pytest.raises(ParseError):
            load_templates(path)

    def test_evidence_query_without_premask(self):
        fact = Fact("f", "raven", "fly", "CapableOf",
                    (EvidenceSentence("Ravens can fly."),))
        query = evidence_query(fact, fact.evidences[0])
        assert list(query.tokens) == ["Ravens", "can", MASK, "."]
