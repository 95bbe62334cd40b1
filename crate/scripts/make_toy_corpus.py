"""Regenerates crates/core/data/toy_corpus.smi from fragment combinations."""
import random

alkyl = ["C", "CC", "CCC", "CC(C)", "CCCC", "CC(C)C", "C(C)(C)C", "CCCCC", "CC(C)CC"]
groups = ["O", "N", "C(=O)O", "C(=O)N", "C#N", "F", "Cl", "Br", "C=O", "OC", "C(=O)OC",
          "S", "N(C)C", "C=C", "OCC", "C(F)(F)F", "NC(=O)C", "C(=O)C"]
subs = ["C", "CC", "O", "N", "F", "Cl", "Br", "OC", "C(=O)O", "C#N", "C(=O)C", "CO", "C(F)(F)F", "N(C)C", "C=O"]
rings = ["C1CCCCC1", "C1CCCC1", "C1CC1", "C1CCOC1", "C1CCNCC1", "C1CCOCC1"]

# a group written before the attachment point must end on an atom with a free valence
LEADING = {"C#N": "N#C", "C=O": "O=C", "C(F)(F)F": "FC(F)(F)"}


def lead(g):
    return LEADING.get(g, g)


mols = set()
for n in range(1, 9):
    mols.add("C" * n)
for r in alkyl:
    for g in groups:
        mols.add(r + g)
for g in groups:
    mols.add(lead(g) + "c1ccccc1" if g[0] in "CNOS" and "(" not in g[:2] else "c1ccccc1" + g)
    mols.add("c1ccc(" + g + ")cc1")
for x in subs:
    for y in subs:
        mols.add(lead(x) + "c1ccc(" + y + ")cc1")
        mols.add(lead(x) + "c1cccc(" + y + ")c1")
for het in ["c1ccncc1", "c1ccoc1", "c1ccsc1", "c1cncnc1"]:
    mols.add(het)
for x in subs:
    mols.add(lead(x) + "c1ccncc1")
    mols.add(lead(x) + "c1ccco1")
    mols.add(lead(x) + "c1cccs1")
for r in rings:
    mols.add(r)
    for x in subs:
        mols.add(lead(x) + r)
for x in ["C", "CC", "O", "N"]:
    mols.add("O=C1CCCCC1" if x == "C" else x + "C1CCC(=O)CC1")
for a in alkyl[:5]:
    for b in alkyl[:5]:
        mols.add(a + "OC(=O)" + b)
        mols.add(a + "NC(=O)" + b)
        mols.add(a + "C(=O)" + b)

mols = sorted(m for m in mols if len(m) <= 24)
random.Random(20231015).shuffle(mols)
mols = sorted(mols[:500], key=lambda s: (len(s), s))
with open("crates/core/data/toy_corpus.smi", "w") as f:
    f.write("# Toy corpus: short molecules in the supported SMILES subset, one per line.\n")
    for m in mols:
        f.write(m + "\n")
print(len(mols), sum(map(len, mols)) / len(mols))
