import pandas as pd
df = pd.read_csv("products.csv")
df["value"] = df["price"] * 2
print(df.head())
