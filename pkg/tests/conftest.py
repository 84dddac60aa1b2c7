import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from chronorules.tkg import Catalog, Quadruple, RelationCatalog, build_kg

DATA_DIR = Path(__file__).parent.parent / "data" / "synthetic"


def make_kg(named_quads, add_inverses=True):
    """Build a KG from (subject, relation, object, t) name tuples.

    Returns (kg, entities, relations); ids are assigned first-seen.
    """
    entities, relations = Catalog(), RelationCatalog()
    quads = [
        Quadruple(entities.add(s), relations.add(r), entities.add(o), t)
        for s, r, o, t in named_quads
    ]
    kg = build_kg(quads, entities, relations, add_inverses=add_inverses)
    return kg, entities, relations


def kg_from_ids(quads, n_entities, n_relations, add_inverses=True):
    """Build a KG from integer quadruple tuples with dense id catalogs."""
    entities = Catalog(f"e{i}" for i in range(n_entities))
    relations = RelationCatalog(f"r{i}" for i in range(n_relations))
    kg = build_kg([Quadruple(*q) for q in quads], entities, relations, add_inverses=add_inverses)
    return kg, entities, relations


@pytest.fixture
def toy_kg():
    """The two-edge KG with one closed path: r1(a,b,1), r2(a,b,2)."""
    return make_kg([("a", "r1", "b", 1), ("a", "r2", "b", 2)])


@pytest.fixture
def synthetic_paths():
    return {
        "historical": DATA_DIR / "historical.txt",
        "current": DATA_DIR / "current.txt",
        "future": DATA_DIR / "future.txt",
    }
