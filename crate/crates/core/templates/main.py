import csv
import os
import random
from pathlib import Path

# built-in random module
random.seed(0)
# numpy
# np.random.seed(0)
# tensorflow
# tf.random.set_seed(0)
# pytorch
# torch.backends.cudnn.benchmark = False
# torch.backends.cudnn.deterministic = True
# torch.cuda.manual_seed_all(0)
# torch.manual_seed(0)


def main():
    full = os.environ.get("FULL") == "1"
    num_epochs = 20 if full else 5
    num_samples = 20_000 if full else 1_000
    lr = 0.01
    batch_size = 32

    artifacts = Path("artifacts")
    artifacts.mkdir(exist_ok=True)

    # Fit y = 2x + 1 with SGD on noisy samples.
    data = [(x, 2 * x + 1 + random.gauss(0, 0.1)) for x in (random.random() for _ in range(num_samples))]
    w, b = 0.0, 0.0
    rows = []
    for epoch in range(1, num_epochs + 1):
        random.shuffle(data)
        for i in range(0, len(data), batch_size):
            batch = data[i : i + batch_size]
            gw = sum((w * x + b - y) * x for x, y in batch) / len(batch)
            gb = sum(w * x + b - y for x, y in batch) / len(batch)
            w -= lr * gw
            b -= lr * gb
        loss = sum((w * x + b - y) ** 2 for x, y in data) / len(data)
        rows.append((epoch, loss, w, b))

    with open(artifacts / "keys-values.csv", "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["key", "value"])
        writer.writerow(["lr", lr])
        writer.writerow(["num-epochs", num_epochs])
        writer.writerow(["batch-size", batch_size])
        writer.writerow(["mode", "full" if full else "draft"])

    lines = [
        "\\begin{tabular}{rrrr}",
        "\\toprule",
        "Epoch & Loss & $w$ & $b$ \\\\",
        "\\midrule",
    ]
    for epoch, loss, w_, b_ in rows:
        lines.append(f"{epoch} & {loss:.4f} & {w_:.4f} & {b_:.4f} \\\\")
    lines += ["\\bottomrule", "\\end{tabular}", ""]
    (artifacts / "metrics.tex").write_text("\n".join(lines))


if __name__ == "__main__":
    main()
