"""Writes molecules_300.csv: scaffold/substituent combinations with RDKit
descriptors. Deterministic; rerun to regenerate."""
import csv
import itertools
import random

from rdkit import Chem
from rdkit.Chem import Crippen, Descriptors

SCAFFOLDS = {
    "benzene": "c1ccc(cc1){}",
    "pyridine": "c1ccncc1{}",
    "cyclohexane": "C1CCC(CC1){}",
    "chain": "CCCC{}",
    "thiophene": "c1ccsc1{}",
    "piperidine": "C1CCNCC1{}",
    "furan": "c1ccoc1{}",
    "naphthalene": "c1ccc2ccccc2c1{}",
}
SUBSTITUENTS = {
    "H": "",
    "methyl": "C",
    "ethyl": "CC",
    "hydroxyl": "O",
    "amine": "N",
    "carboxyl": "C(=O)O",
    "ester": "C(=O)OC",
    "amide": "C(=O)N",
    "chloro": "Cl",
    "fluoro": "F",
    "nitrile": "C#N",
    "methoxy": "OC",
    "ketone": "C(=O)C",
    "aldehyde": "C=O",
    "thiol": "S",
    "bromo": "Br",
}
LINKERS = ["", "C", "CC", "O", "N"]


def main():
    rng = random.Random(7)
    rows = []
    seen = set()
    combos = list(itertools.product(SCAFFOLDS.items(), LINKERS, SUBSTITUENTS.items()))
    rng.shuffle(combos)
    for (scaffold, pattern), linker, (group, sub) in combos:
        smi = pattern.format(linker + sub)
        mol = Chem.MolFromSmiles(smi)
        if mol is None:
            continue
        canon = Chem.MolToSmiles(mol)
        if canon in seen:
            continue
        seen.add(canon)
        rows.append({
            "id": f"mol-{len(rows):03d}",
            "smiles": smi,
            "mass": round(Descriptors.MolWt(mol), 3),
            "logp": round(Crippen.MolLogP(mol), 3),
            "scaffold": scaffold,
            "group": group,
        })
        if len(rows) == 300:
            break
    assert len(rows) == 300, len(rows)
    with open("molecules_300.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


if __name__ == "__main__":
    main()
