import pytest

from mqnra.trees import Forest, build_tree

# The running example: two biography documents.

NYGAARD = {
    "_id": 4,
    "awards": [
        {"award": "Rosing Prize", "year": 1999, "by": "Norwegian Data Association"},
        {"award": "Turing Award", "year": 2001, "by": "ACM"},
        {"award": "IEEE John von Neumann Medal", "year": 2001, "by": "IEEE"},
    ],
    "birth": "1926-08-27",
    "contributes": ["OOP", "Simula"],
    "death": "2002-08-10",
    "name": {"first": "Kristen", "last": "Nygaard"},
}

VAN_ROSSUM = {
    "_id": 6,
    "awards": [
        {"award": "Award for the Advancement of Free Software", "year": 2001, "by": "FSF"},
        {"award": "NLUUG Award", "year": 2003, "by": "NLUUG"},
    ],
    "birth": "1956-01-31",
    "contribs": ["Python"],
    "name": {"first": "Guido", "last": "van Rossum"},
}

# The published bios type covers only part of the documents' keys; rschema
# and the relational view project onto it.
BIOS_TYPE = {
    "_id": "literal",
    "awards": [{"award": "literal", "year": "literal"}],
    "birth": "literal",
    "contributes": ["literal"],
    "name": {"first": "literal", "last": "literal"},
}

# A full type that both documents satisfy strictly (used end to end).
BIOS_TYPE_FULL = {
    "_id": "literal",
    "awards": [{"award": "literal", "year": "literal", "by": "literal"}],
    "birth": "literal",
    "contributes": ["literal"],
    "contribs": ["literal"],
    "death": "literal",
    "name": {"first": "literal", "last": "literal"},
}


@pytest.fixture
def nygaard_tree():
    return build_tree(NYGAARD)


@pytest.fixture
def bios_forest():
    return Forest.of_values([NYGAARD, VAN_ROSSUM])
